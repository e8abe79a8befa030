"""prunelab 核心库：模型、依赖图、重要性评分、剪枝、LoRA 恢复与评测"""
