import re
from typing import List, Optional, Union
from pydantic import BaseModel, ConfigDict, Field, model_validator

_PLACEHOLDER = re.compile(r"\{(context|question|options|answer)\}")


class ClassificationItem(BaseModel):
    """分类样本：上下文 + 候选项 + 正确选项下标"""

    model_config = ConfigDict(frozen=True)

    context: str
    question: str = ""
    options: List[str] = Field(min_length=1)
    gold: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_gold(self):
        if self.gold >= len(self.options):
            raise ValueError("gold 必须小于选项数量")
        return self

    def key(self) -> tuple:
        return (self.context, self.question, tuple(self.options))


class CorpusItem(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str

    def key(self) -> tuple:
        return (self.text,)


TaskItem = Union[ClassificationItem, CorpusItem]


class PromptTemplate(BaseModel):
    """少样本提示词模板

    占位符：{context} {question} {options} {answer}
    不绑定 {answer} 渲染时得到查询形式（截断到 {answer} 之前）。
    """

    model_config = ConfigDict(frozen=True)

    template_id: str
    instruction: str
    shot_format: str = "{context}\n{question}\nOptions: {options}\nAnswer: {answer}"
    separator: str = "\n\n"
    option_joiner: str = " / "

    def _fill(self, text: str, item: ClassificationItem, answer: Optional[str]) -> str:
        # 一次扫描完成替换：已填入的内容不会再被当作占位符
        values = {
            "context": item.context,
            "question": item.question,
            "options": self.option_joiner.join(item.options),
        }
        if answer is not None:
            values["answer"] = answer
        return _PLACEHOLDER.sub(lambda m: values.get(m.group(1), m.group(0)), text)

    def render(self, item: ClassificationItem, with_answer: bool = True) -> str:
        if with_answer:
            return self._fill(self.shot_format, item, item.options[item.gold])
        return self.query_form(item)

    def query_form(self, item: ClassificationItem) -> str:
        prefix = self.shot_format.split("{answer}", 1)[0]
        return self._fill(prefix, item, None)


class TaskDataset(BaseModel):
    """任务数据集：train 为少样本/微调样本池，eval 为留出评测集"""

    task_id: str
    kind: str = Field("classification", pattern="^(classification|lm)$")
    train: List[ClassificationItem] = Field(default_factory=list)
    eval: List[ClassificationItem] = Field(default_factory=list)
    corpus: List[CorpusItem] = Field(default_factory=list)
    template_id: Optional[str] = Field(None, description="与任务匹配的模板")

    @model_validator(mode="after")
    def _check_disjoint(self):
        overlap = {i.key() for i in self.train} & {i.key() for i in self.eval}
        if overlap:
            raise ValueError(f"train / eval 划分存在 {len(overlap)} 条重复样本")
        return self
