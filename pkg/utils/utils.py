import json
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional, Union

from pydantic import BaseModel

from .log import logger

__all__ = [
    "PARTIAL_SUFFIX",
    "json_response",
    "resolve_seed",
    "to_jsonable",
    "dumps_report",
    "partial_artifact",
    "write_text",
    "write_json",
    "read_json",
]

PARTIAL_SUFFIX = ".partial"


# 定义 json 返回内容
# 格式：{"code": 0, "msg": "", "success": true, "data": {}}
def json_response(
    code=0,
    msg="",
    success=True,
    data: Optional[Any] = None,
    **kwargs,
):
    r_d = {}
    r_d["code"] = code
    r_d["msg"] = msg
    r_d["success"] = success

    if data is not None:
        r_d["data"] = data

    for k, v in kwargs.items():
        r_d[k] = v

    logger.debug(f"json响应内容: {r_d}")
    if not success:
        logger.error(f"json响应状态码: {code}, msg: {msg}, success: {success}")
    return r_d


def resolve_seed(seed: int) -> int:
    """环境变量 PRUNELAB_SEED 优先于配置中的种子（用于 CI）"""
    override = os.environ.get("PRUNELAB_SEED")
    if override is None or override == "":
        return seed
    return int(override)


def to_jsonable(payload: Union[BaseModel, dict, list]) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json")
    if isinstance(payload, list):
        return [to_jsonable(p) for p in payload]
    if isinstance(payload, dict):
        return {k: to_jsonable(v) for k, v in payload.items()}
    return payload


def dumps_report(payload: Union[BaseModel, dict, list]) -> str:
    """报告统一序列化：键排序、缩进固定，保证同配置逐字节一致"""
    return json.dumps(to_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@contextmanager
def partial_artifact(path: Union[str, Path]) -> Iterator[Path]:
    """先写入 `<path>.partial`，成功后再重命名

    失败时保留 .partial 文件，便于排查。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + PARTIAL_SUFFIX)
    yield tmp
    os.replace(tmp, path)


def write_text(path: Union[str, Path], text: str) -> Path:
    with partial_artifact(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)
    return Path(path)


def write_json(path: Union[str, Path], payload: Union[BaseModel, dict, list]) -> Path:
    return write_text(path, dumps_report(payload))


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
