"""generate：temperature + top-k 采样"""
import argparse

from utils import logger, resolve_seed

from lab.generation import generate

from .common import add_input_arg, add_seed_arg, load_model

NAME = "generate"
HELP = "从检查点采样生成文本"


def register(parser: argparse.ArgumentParser) -> None:
    add_input_arg(parser)
    add_seed_arg(parser)
    parser.add_argument("--prompt", required=True)
    parser.add_argument("--max-tokens", type=int, default=64)
    parser.add_argument("--temperature", type=float, default=1.0)
    parser.add_argument("--top-k", type=int, default=50)


def handle(args: argparse.Namespace) -> dict:
    model = load_model(args.input)
    seed = resolve_seed(args.seed)
    logger.info(f"参数: temperature {args.temperature} / top-k {args.top_k} / seed {seed}")
    text = generate(model, args.prompt, args.max_tokens, args.temperature, args.top_k, seed)
    return {"prompt": args.prompt, "completion": text}
