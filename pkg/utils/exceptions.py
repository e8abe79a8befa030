from typing import Any, Optional


class PruneLabError(Exception):
    """业务异常基类

    code: 错误码（与 json 错误响应中的 code 一致）
    msg: 错误描述
    detail: 附加信息（可选，需可 JSON 序列化）
    """

    code = 500
    exit_status = 1

    def __init__(self, msg: str, detail: Optional[Any] = None):
        super().__init__(msg)
        self.msg = msg
        self.detail = detail


class ConfigError(PruneLabError):
    code = 400
    exit_status = 2


class ShapeError(PruneLabError):
    code = 422


class GradientError(PruneLabError):
    code = 422


class NonFiniteError(PruneLabError):
    """出现 NaN/Inf（detail 中携带出错的序号或步数）"""

    code = 422


class PrecisionError(PruneLabError):
    code = 422


class ModelInputError(PruneLabError):
    code = 400


class CheckpointError(PruneLabError):
    code = 422


class GraphError(PruneLabError):
    code = 422


class ImportanceError(PruneLabError):
    code = 422


class SelectionError(PruneLabError):
    code = 422


class PlanError(PruneLabError):
    code = 422


class AdapterError(PruneLabError):
    code = 409


class TrainingError(PruneLabError):
    code = 422


class DatasetError(PruneLabError):
    code = 400


class EvaluationError(PruneLabError):
    code = 422


class GenerationError(PruneLabError):
    code = 400


class StageError(PruneLabError):
    """流水线阶段失败，保留阶段名与原始异常"""

    def __init__(self, stage: str, cause: Exception):
        cause_msg = cause.msg if isinstance(cause, PruneLabError) else str(cause)
        super().__init__(
            f"阶段 [{stage}] 执行失败: {cause_msg}",
            detail={"stage": stage, "cause": type(cause).__name__},
        )
        self.stage = stage
        self.cause = cause
        self.exit_status = getattr(cause, "exit_status", 1)
