"""graph：依赖图与耦合分组"""
import argparse

from utils import write_json

from lab.depgraph import build_graph, enumerate_groups, graph_dump

from .common import add_model_args, load_model, model_config_from_args

NAME = "graph"
HELP = "构建依赖图并列出耦合分组"


def register(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--in", dest="input", help="从检查点读取各层形状（默认使用模型参数）")
    add_model_args(parser)
    parser.add_argument("--dump", help="写出节点、边与分组的 JSON")


def handle(args: argparse.Namespace) -> dict:
    config = load_model(args.input).config if args.input else model_config_from_args(args)
    graph = build_graph(config)
    groups = enumerate_groups(graph)
    result = {
        "nodes": len(graph),
        "edges": len(graph.edges),
        "groups": len(groups),
        "labels": [g.label for g in groups],
    }
    if args.dump:
        result["dump"] = str(write_json(args.dump, graph_dump(graph)))
    return result
