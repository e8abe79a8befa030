import logging
import time
import threading
from typing import Dict, Optional
from contextlib import contextmanager
from .log import logger

__all__ = ["PerformanceMonitor"]


class PerformanceMonitor:
    """阶段耗时监控（线程安全）
    Args:
        name: 监控对象名称（如流水线名、命令名）

    使用示例：
    monitor = PerformanceMonitor("run")
    with monitor.track("prune"):
        ...
    monitor.log_metrics()

    耗时只写日志，不进入报告文件（报告需逐字节可复现）。
    """

    def __init__(self, name: Optional[str] = None):
        self.lock = threading.Lock()
        self.name = name
        self.metrics: Dict[str, float] = {}
        self.start_times: Dict[str, float] = {}

    def start(self, key: str) -> None:
        """启动计时器"""
        with self.lock:
            self.metrics.setdefault(key, 0.0)
            self.start_times[key] = time.perf_counter()

            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(f"⏳ 启动监控 [{key}]")

    def end(self, key: str) -> None:
        """结束计时器，未配对的 end 调用自动忽略"""
        with self.lock:
            start_time = self.start_times.pop(key, None)
            if start_time is None:
                return

            elapsed = (time.perf_counter() - start_time) * 1000
            self.metrics[key] += round(elapsed, 2)

            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(f"⏱️ 完成监控 [{key}] 耗时: {elapsed:.2f}ms")

    def log_metrics(self) -> Dict[str, float]:
        """输出耗时报告并重置计数器"""
        with self.lock:
            total = round(sum(self.metrics.values()), 2)
            log_msg = [
                f"\n\n{'='*40} 耗时报告 {'='*40}",
                f"▪ 任务: {self.name}" if self.name else "",
                *[f"▪ {k:<20}: {v:>2.2f}ms" for k, v in self.metrics.items()],
                f"🏁 总耗时: {total:>2.2f}ms",
                f"{'='*90}\n",
            ]
            logger.info("\n".join(line for line in log_msg if line))

            report = {k: round(v, 2) for k, v in self.metrics.items()}
            self.metrics.clear()
            return report

    @contextmanager
    def track(self, key: str):
        """上下文管理器自动计时
        with monitor.track('calibrate'):
            accumulate_calibration_gradients(...)
        """
        self.start(key)
        try:
            yield
        except Exception:
            logger.error(f"⛔ {key} 执行异常", exc_info=True)
            raise
        finally:
            self.end(key)
