import os
import sys
from pathlib import Path
from typing import Optional
import logging

import yaml
from pydantic import BaseModel, Field

from .exceptions import ConfigError

__all__ = ["load_config", "resolve_path", "AppConfig", "ROOT_DIR"]


class LoggingConfig(BaseModel):
    level: str = Field("INFO", pattern="^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$")
    to_file: bool = True


class PathsSettings(BaseModel):
    logs: str = "logs"


class DefaultsSettings(BaseModel):
    seed: int = 7


class APP(BaseModel):
    title: str = "prunelab"
    description: str = ""
    version: str = "1.0.0"
    env: str = Field("dev", pattern="^(dev|prod|test)$")

    def production(self) -> bool:
        return self.env == "prod"


class AppConfig(BaseModel):
    app: APP = Field(default_factory=APP)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    paths: PathsSettings = Field(default_factory=PathsSettings)
    defaults: DefaultsSettings = Field(default_factory=DefaultsSettings)


ROOT_DIR = Path(__file__).resolve().parent.parent

_config: Optional[AppConfig] = None  # 全局配置缓存


def _resolve_env() -> str:
    """解析运行环境（支持 --env=prod 或环境变量 PRUNELAB_ENV）"""
    env = os.environ.get("PRUNELAB_ENV", "dev")
    for arg in sys.argv[1:]:
        if arg.startswith("--env="):
            env = arg.split("=", 1)[1]
    return env


def load_config() -> AppConfig:
    global _config

    if _config is None:
        env = _resolve_env()
        config_path = ROOT_DIR / f"config.{env}.yaml"
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                raw_config = yaml.safe_load(f) or {}
            _config = AppConfig(**raw_config)
        except FileNotFoundError:
            logging.error(f"Config file not found: {config_path}")
            raise ConfigError(f"配置文件不存在: {config_path}")
        except yaml.YAMLError as e:
            logging.error(f"Invalid YAML format: {str(e)}")
            raise ConfigError(f"配置文件格式错误: {str(e)}")
        except Exception as e:
            logging.error(f"Configuration validation failed: {str(e)}")
            raise ConfigError(f"配置文件加载失败: {str(e)}")
    return _config


def resolve_path(path: str) -> Path:
    """相对路径统一以项目根目录为基准"""
    p = Path(path)
    return p if p.is_absolute() else ROOT_DIR / p
