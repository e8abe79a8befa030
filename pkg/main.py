import argparse
import json
import sys
from typing import List, Optional

from utils import PerformanceMonitor, handle_exception, json_response, load_config, logger, to_jsonable
from commands import register_commands

# 初始化配置
settings = load_config()


def build_parser() -> argparse.ArgumentParser:
    """命令行组装：每个子命令都带 --version 与 --env"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--version", action="version", version=f"%(prog)s {settings.app.version}")
    common.add_argument(
        "--env", choices=["dev", "prod", "test"], help="运行环境，需写成 --env=NAME（决定 config.NAME.yaml）"
    )

    parser = argparse.ArgumentParser(prog=settings.app.title, description=settings.app.description, parents=[common])
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    register_commands(subparsers, [common])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主程序入口：结果写 stdout，错误以 JSON 写 stderr，返回退出码"""
    args = build_parser().parse_args(argv)

    logger.info(f"============= 进入 {args.command} =============")
    monitor = PerformanceMonitor(args.command)
    monitor.start(args.command)
    error: Optional[Exception] = None
    try:
        result = args.handler(args)
    except Exception as exc:
        error = exc
    monitor.end(args.command)
    monitor.log_metrics()
    # 错误 JSON 必须是 stderr 的最后一行
    if error is not None:
        return handle_exception(error)

    if isinstance(result, str):
        sys.stdout.write(result)
    else:
        payload = json_response(code=200, msg="操作成功", data=to_jsonable(result))
        sys.stdout.write(json.dumps(payload, ensure_ascii=False, indent=2, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
