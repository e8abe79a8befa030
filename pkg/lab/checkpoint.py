"""检查点格式

    magic  8 字节  b"PLAB0001"
    hlen   8 字节  小端 uint64，JSON 头长度
    header hlen 字节 UTF-8 JSON: {config, dtype, tensors: [{name, shape, offset, nbytes}], meta}
    data   按 header 顺序拼接的小端 float32 张量
"""
import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from schemas import ModelConfig
from utils import CheckpointError, logger, partial_artifact

from .model import TransformerModel, empty_like_config, has_adapters

MAGIC = b"PLAB0001"
_LEN = struct.Struct("<Q")
_DATA_DTYPE = np.dtype("<f4")


def save_checkpoint(
    model: TransformerModel, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None
) -> Path:
    if has_adapters(model):
        raise CheckpointError("模型仍带有 LoRA 适配器，请先合并再保存")
    if model.dtype != torch.float32:
        logger.warning(f"检查点以 float32 存储，{model.dtype} 权重将被降精度")

    tensors, blobs, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().numpy().astype(_DATA_DTYPE, copy=False)
        raw = array.tobytes(order="C")
        tensors.append({"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)

    header = {
        "config": model.config.model_dump(mode="json"),
        "dtype": "float32",
        "tensors": tensors,
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with partial_artifact(path) as tmp:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(_LEN.pack(len(header_bytes)))
            f.write(header_bytes)
            for raw in blobs:
                f.write(raw)
    logger.debug(f"检查点已写入: {path}，张量数 {len(tensors)}")
    return Path(path)


def read_header(path: Union[str, Path]) -> Dict[str, Any]:
    header, _ = _read(path)
    return header


def _read(path: Union[str, Path]):
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise CheckpointError(f"检查点不存在: {path}")

    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("检查点 magic 不匹配", detail={"path": str(path)})
    start = len(MAGIC) + _LEN.size
    if len(blob) < start:
        raise CheckpointError("检查点被截断（缺少头长度）")
    (hlen,) = _LEN.unpack_from(blob, len(MAGIC))
    if len(blob) < start + hlen:
        raise CheckpointError("检查点被截断（头不完整）")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点头解析失败: {e}")
    return header, memoryview(blob)[start + hlen :]


def load_checkpoint(path: Union[str, Path]) -> TransformerModel:
    header, data = _read(path)
    try:
        config = ModelConfig(**header["config"])
        entries = header["tensors"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"检查点头字段缺失或无效: {e}")

    model = empty_like_config(config, torch.float32)
    expected = model.state_dict()
    state = {}
    for entry in entries:
        name, shape = entry["name"], tuple(entry["shape"])
        begin, nbytes = entry["offset"], entry["nbytes"]
        if begin + nbytes > len(data):
            raise CheckpointError("检查点被截断（张量数据不完整）", detail={"tensor": name})
        if name not in expected or tuple(expected[name].shape) != shape:
            raise CheckpointError("张量与配置形状不符", detail={"tensor": name, "shape": list(shape)})
        array = np.frombuffer(data[begin : begin + nbytes], dtype=_DATA_DTYPE).reshape(shape)
        state[name] = torch.from_numpy(array.copy())

    missing = sorted(set(expected) - set(state))
    if missing:
        raise CheckpointError("检查点缺少张量", detail={"missing": missing})
    model.load_state_dict(state)
    return model
