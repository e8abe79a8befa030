import json
import sys

from pydantic import ValidationError

from .exceptions import PruneLabError, StageError
from .log import logger
from .utils import json_response

__all__ = ["handle_exception", "parse_validation_errors"]


def handle_exception(exc: BaseException) -> int:
    """把异常转换为 stderr 上的 JSON 错误响应，返回进程退出码"""

    if isinstance(exc, ValidationError):
        # 配置校验失败
        payload = json_response(
            code=400,
            msg="配置参数校验失败",
            success=False,
            detail=parse_validation_errors(exc.errors()),
        )
        status = 2
    elif isinstance(exc, PruneLabError):
        extra = {}
        if isinstance(exc, StageError):
            extra["stage"] = exc.stage
        payload = json_response(
            code=exc.code,
            msg=exc.msg,
            success=False,
            detail=exc.detail,
            error=type(exc).__name__,
            **extra,
        )
        status = exc.exit_status
    else:
        logger.error(f"系统异常: {str(exc)}", exc_info=exc)
        payload = json_response(
            code=500, msg="内部错误", success=False, error=type(exc).__name__, detail=str(exc)
        )
        status = 1

    sys.stderr.write(json.dumps(payload, ensure_ascii=False, default=str) + "\n")
    return status


def parse_validation_errors(errors):
    """解析 pydantic 校验错误为 {field, location, type, message} 列表"""
    error_mapping = {
        "missing": "缺少必填字段",
        "int_parsing": "需要整数类型",
        "float_parsing": "需要浮点类型",
        "string_type": "需要字符串类型",
        "json_invalid": "无效的JSON格式",
        "value_error": "值不符合要求",
        "greater_than": "数值过小",
        "greater_than_equal": "数值过小",
        "less_than": "数值过大",
        "less_than_equal": "数值过大",
        "string_pattern_mismatch": "格式不符合要求",
        "extra_forbidden": "不允许的字段",
    }

    formatted_errors = []

    for error in errors:
        location = ".".join(str(part) for part in error["loc"])
        error_type = error_mapping.get(error["type"], error["type"])

        error_msg = error["msg"]
        if error["type"] == "missing":
            error_msg = f"缺少必填字段：{location.split('.')[-1]}"

        formatted_errors.append(
            {
                "field": location.split(".")[-1] if location else "",
                "location": location,
                "type": error_type,
                "message": error_msg,
            }
        )

    return formatted_errors
