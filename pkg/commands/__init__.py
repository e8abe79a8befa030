import argparse
from typing import List

from . import build, evaluate, finetune, generate, graph, prompt_matrix, prune, report, run, sweep

# 每个模块提供 NAME / HELP / register(parser) / handle(args)
COMMANDS = [build, prune, finetune, evaluate, prompt_matrix, sweep, generate, graph, report, run]


def register_commands(subparsers, parents: List[argparse.ArgumentParser]) -> None:
    for module in COMMANDS:
        parser = subparsers.add_parser(module.NAME, help=module.HELP, description=module.HELP, parents=parents)
        module.register(parser)
        parser.set_defaults(handler=module.handle, command=module.NAME)
