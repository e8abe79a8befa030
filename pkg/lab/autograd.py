"""反向模式求导与有限差分校验

前向、损失、重要性评分和训练都建立在 torch 的反向图之上；这里把它包装成
“按参数标签取梯度”的 tape，并提供中心差分作为梯度的独立校验。
"""
import math
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Union

import torch

from utils import GradientError, NonFiniteError, PrecisionError

DTYPES = {"float32": torch.float32, "float64": torch.float64}


def resolve_dtype(dtype: Union[str, torch.dtype]) -> torch.dtype:
    if isinstance(dtype, torch.dtype):
        return dtype
    if dtype not in DTYPES:
        raise PrecisionError(f"不支持的精度: {dtype}", detail={"allowed": list(DTYPES)})
    return DTYPES[dtype]


def check_finite(tensor: torch.Tensor, what: str, **where) -> None:
    """NaN/Inf 必须显式报错，不允许静默传播"""
    if not bool(torch.isfinite(tensor).all()):
        raise NonFiniteError(f"{what} 出现非有限值", detail=where or None)


def _gradients(
    loss: torch.Tensor, params: Mapping[str, torch.Tensor], tags: List[str]
) -> Dict[str, torch.Tensor]:
    if loss.numel() != 1:
        raise GradientError("loss 必须是标量", detail={"shape": list(loss.shape)})
    missing = [t for t in tags if t not in params]
    if missing:
        raise GradientError("参数标签不在 tape 中", detail={"tags": missing})

    targets = [params[t] for t in tags]
    if not loss.requires_grad or not targets:
        return {t: torch.zeros_like(params[t]) for t in tags}

    grads = torch.autograd.grad(loss.reshape(()), targets, allow_unused=True)
    # 未被 loss 触达的参数返回零梯度
    return {
        t: (g if g is not None else torch.zeros_like(p))
        for t, p, g in zip(tags, targets, grads)
    }


class GradientTape:
    """一次前向/反向对应一条 tape（单写者）

    with GradientTape() as tape:
        tape.watch("w", w)
        loss = f(w)
        grads = tape.gradient(loss)
    """

    def __init__(self):
        self._params: Dict[str, torch.Tensor] = {}
        self._used = False
        self._ctx = None

    def __enter__(self) -> "GradientTape":
        self._ctx = torch.enable_grad()
        self._ctx.__enter__()
        return self

    def __exit__(self, exc_type, exc, tb):
        self._ctx.__exit__(exc_type, exc, tb)
        self._ctx = None

    @property
    def tags(self) -> List[str]:
        return list(self._params)

    def watch(self, tag: str, tensor: torch.Tensor) -> torch.Tensor:
        if tag in self._params and self._params[tag] is not tensor:
            raise GradientError(f"标签重复: {tag}")
        if not tensor.requires_grad:
            tensor.requires_grad_(True)
        self._params[tag] = tensor
        return tensor

    def watch_module(self, module: torch.nn.Module, names: Optional[Iterable[str]] = None) -> None:
        named = dict(module.named_parameters())
        for name in names if names is not None else named:
            if name not in named:
                raise GradientError(f"模块中不存在参数: {name}")
            self.watch(name, named[name])

    def gradient(
        self, loss: torch.Tensor, tags: Optional[Iterable[str]] = None
    ) -> Dict[str, torch.Tensor]:
        if self._used:
            raise GradientError("同一条 tape 只能反向一次")
        result = _gradients(loss, self._params, list(tags) if tags is not None else self.tags)
        self._used = True
        return result

    def operations(self, loss: torch.Tensor) -> List[str]:
        """按拓扑序（输入在前）列出 loss 的反向图节点"""
        if loss.grad_fn is None:
            return []
        by_id = {id(p): tag for tag, p in self._params.items()}
        order: List[str] = []
        seen = set()
        stack = [(loss.grad_fn, False)]
        while stack:
            fn, expanded = stack.pop()
            if fn is None:
                continue
            if expanded:
                variable = getattr(fn, "variable", None)
                if variable is not None:
                    order.append(f"param:{by_id.get(id(variable), '?')}")
                else:
                    order.append(type(fn).__name__)
                continue
            if fn in seen:
                continue
            seen.add(fn)
            stack.append((fn, True))
            for child, _ in fn.next_functions:
                if child is not None and child not in seen:
                    stack.append((child, False))
        return order


def grad(loss: torch.Tensor, params: Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """∂loss/∂P，按标签返回；params 必须在前向之前已 requires_grad"""
    return _gradients(loss, params, list(params))


def _evaluate_at(f: Callable[[Dict[str, torch.Tensor]], torch.Tensor], params) -> float:
    value = f(params)
    value = float(value.item() if isinstance(value, torch.Tensor) else value)
    if not math.isfinite(value):
        raise NonFiniteError("有限差分探测点返回非有限值")
    return value


def finite_diff_gradient(
    f: Callable[[Dict[str, torch.Tensor]], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    epsilon: float = 1e-5,
) -> Dict[str, torch.Tensor]:
    """中心差分 (f(p+εe) − f(p−εe)) / 2ε，逐坐标计算（仅 64 位）"""
    if epsilon <= 0:
        raise GradientError("epsilon 必须大于 0")
    for tag, p in params.items():
        if p.dtype != torch.float64:
            raise PrecisionError(f"有限差分需要 64 位参数: {tag} 为 {p.dtype}")

    work = {tag: p.detach().clone() for tag, p in params.items()}
    result: Dict[str, torch.Tensor] = {}
    with torch.no_grad():
        for tag, value in work.items():
            flat = value.view(-1)
            g = torch.zeros_like(value)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + epsilon
                f_plus = _evaluate_at(f, work)
                flat[i] = orig - epsilon
                f_minus = _evaluate_at(f, work)
                flat[i] = orig
                gflat[i] = (f_plus - f_minus) / (2 * epsilon)
            result[tag] = g
    return result


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    """‖a−b‖ / max(‖a‖, ‖b‖)，两者都为零时返回 0"""
    scale = max(float(a.norm()), float(b.norm()))
    if scale == 0.0:
        return 0.0
    return float((a - b).norm()) / scale
