import logging
import logging.config
import os, time
from .config import load_config, resolve_path

__all__ = ["logger"]

# 初始化配置
config = load_config()

log_path = str(resolve_path(config.paths.logs))  # 日志存放路径
if config.logging.to_file and not os.path.exists(log_path):
    os.makedirs(log_path, exist_ok=True)  # 启动时自动创建 logs 目录


def _file_handler(level: str, prefix: str) -> dict:
    return {
        "level": level,
        "class": "logging.handlers.RotatingFileHandler",
        "filename": os.path.join(
            log_path, "{}-{}.log".format(prefix, time.strftime("%Y-%m-%d"))
        ),
        "maxBytes": 1024 * 1024 * 5,  # 文件大小
        "backupCount": 5,  # 备份数
        "formatter": "standard",
        "encoding": "utf-8",
    }


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "[%(asctime)s] [%(filename)s:%(lineno)d] [%(module)s:%(funcName)s] "
            "[%(levelname)s]- %(message)s"
        },
        "simple": {"format": "%(levelname)s %(message)s"},
    },
    "filters": {},
    "handlers": {
        # 控制台输出走 stderr，stdout 留给命令结果
        "console": {
            "level": "DEBUG",
            "class": "logging.StreamHandler",
            "formatter": "standard",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        "prunelab": {
            "handlers": ["console"],
            "level": "INFO",
            "propagate": False,
        },
    },
}

if config.logging.to_file:
    # all 记录全部日志，info / error 分别单独落盘
    LOGGING["handlers"]["default"] = _file_handler("INFO", "all")
    LOGGING["handlers"]["info"] = _file_handler("INFO", "info")
    LOGGING["handlers"]["error"] = _file_handler("ERROR", "error")
    LOGGING["loggers"]["prunelab"]["handlers"] += ["default", "info", "error"]

logging.config.dictConfig(LOGGING)


def _get_logger():
    log = logging.getLogger("prunelab")
    log.setLevel(config.logging.level)
    return log


# 日志句柄
logger = _get_logger()
