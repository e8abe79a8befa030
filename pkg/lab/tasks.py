"""合成分类任务、提示词模板与少样本拼接

四个桌面级分类任务（模式补全、带干扰项的复制、标记奇偶、关键词问答）
各自配有一个匹配模板，另有一个通用模板。
"""
import hashlib
import json
import random
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from schemas import ClassificationItem, CorpusItem, PromptTemplate, TaskDataset
from utils import DatasetError, logger

LETTERS = "abcdefgh"
ANIMALS = ["cat", "dog", "fox", "owl", "bee", "ant", "elk", "yak"]
COLORS = ["red", "blue", "green", "gold", "pink", "gray"]

TEMPLATES: Dict[str, PromptTemplate] = {
    t.template_id: t
    for t in (
        PromptTemplate(
            template_id="pattern-prompt",
            instruction="Continue the repeating pattern.",
            shot_format="Pattern: {context}\nNext: {answer}",
        ),
        PromptTemplate(
            template_id="copy-prompt",
            instruction="Copy the key exactly.",
            shot_format="{context}\nKey: {answer}",
        ),
        PromptTemplate(
            template_id="parity-prompt",
            instruction="Is the number of x marks even or odd?",
            shot_format="Marks: {context}\nCount is {answer}",
        ),
        PromptTemplate(
            template_id="keyword-prompt",
            instruction="Answer with the color.",
            shot_format="{context}\nQ: {question}\nA: {answer}",
        ),
        PromptTemplate(template_id="general", instruction="Choose the correct option."),
    )
}


def _pattern_item(rng: random.Random) -> ClassificationItem:
    unit = rng.sample(LETTERS, rng.choice([2, 3]))
    n = len(unit)
    length = rng.randint(2 * n, 2 * n + 3)
    context = "".join(unit[i % n] for i in range(length))
    answer = unit[length % n]
    distractor = rng.choice([c for c in unit if c != answer])
    options = [answer, distractor]
    rng.shuffle(options)
    return ClassificationItem(
        context=context, question="What comes next?", options=options, gold=options.index(answer)
    )


def _copy_item(rng: random.Random) -> ClassificationItem:
    key = "".join(rng.choice(LETTERS) for _ in range(4))
    pos = rng.randrange(4)
    swap = rng.choice([c for c in LETTERS if c != key[pos]])
    distractor = key[:pos] + swap + key[pos + 1 :]
    options = [key, distractor]
    rng.shuffle(options)
    return ClassificationItem(
        context=f"the key is {key}.", question="Repeat the key.", options=options, gold=options.index(key)
    )


def _parity_item(rng: random.Random) -> ClassificationItem:
    marks = "".join(rng.choice("xo") for _ in range(rng.randint(3, 8)))
    return ClassificationItem(
        context=marks,
        question="Is the count of x even or odd?",
        options=["even", "odd"],
        gold=marks.count("x") % 2,
    )


def _keyword_item(rng: random.Random) -> ClassificationItem:
    animals = rng.sample(ANIMALS, 2)
    colors = rng.sample(COLORS, 3)
    target = rng.randrange(2)
    context = f"the {animals[0]} is {colors[0]}. the {animals[1]} is {colors[1]}."
    answer = colors[target]
    options = list(colors)
    rng.shuffle(options)
    return ClassificationItem(
        context=context,
        question=f"what color is the {animals[target]}?",
        options=options,
        gold=options.index(answer),
    )


TASK_GENERATORS: Dict[str, Callable[[random.Random], ClassificationItem]] = {
    "pattern": _pattern_item,
    "copy": _copy_item,
    "parity": _parity_item,
    "keyword": _keyword_item,
}

TASK_TEMPLATES = {
    "pattern": "pattern-prompt",
    "copy": "copy-prompt",
    "parity": "parity-prompt",
    "keyword": "keyword-prompt",
}


def derive_seed(*parts) -> int:
    """由若干字段派生稳定的 64 位种子（不依赖 Python 的 hash 随机化）"""
    text = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def get_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATES:
        raise DatasetError(f"未知模板: {template_id}", detail={"allowed": sorted(TEMPLATES)})
    return TEMPLATES[template_id]


def template_for(task: TaskDataset) -> PromptTemplate:
    return get_template(task.template_id or "general")


def make_task(task_id: str, train_items: int = 200, eval_items: int = 100, seed: int = 7) -> TaskDataset:
    """生成互不重复的样本并切分为 train / eval"""
    if task_id not in TASK_GENERATORS:
        raise DatasetError(f"未知任务: {task_id}", detail={"allowed": sorted(TASK_GENERATORS)})
    rng = random.Random(derive_seed("task", task_id, seed))
    generator = TASK_GENERATORS[task_id]
    wanted = train_items + eval_items

    items: List[ClassificationItem] = []
    keys = set()
    attempts = 0
    while len(items) < wanted:
        attempts += 1
        if attempts > wanted * 200:
            raise DatasetError(
                f"任务 {task_id} 的样本空间不足以生成 {wanted} 条不重复样本",
                detail={"generated": len(items)},
            )
        item = generator(rng)
        if item.key() in keys:
            continue
        keys.add(item.key())
        items.append(item)

    return TaskDataset(
        task_id=task_id,
        train=items[:train_items],
        eval=items[train_items:],
        template_id=TASK_TEMPLATES[task_id],
    )


def load_task_file(path: Union[str, Path], task_id: Optional[str] = None) -> TaskDataset:
    """读取 JSONL 任务文件

    每行 {context, options, gold[, question][, split]} 或 {text}；
    未标注 split 时每 5 行取 1 行作为 eval。
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"任务文件不存在: {path}")

    train: List[ClassificationItem] = []
    eval_: List[ClassificationItem] = []
    corpus: List[CorpusItem] = []
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]

    for index, line in enumerate(lines):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError(f"任务文件第 {index + 1} 行不是合法 JSON: {e}")
        if not isinstance(record, dict):
            raise DatasetError(f"任务文件第 {index + 1} 行必须是 JSON 对象")
        try:
            if "text" in record:
                corpus.append(CorpusItem(text=record["text"]))
                continue
            split = record.pop("split", None)
            item = ClassificationItem(**record)
        except (ValidationError, TypeError) as e:
            raise DatasetError(f"任务文件第 {index + 1} 行字段无效", detail=str(e))
        if split is None:
            split = "eval" if index % 5 == 4 else "train"
        if split not in ("train", "eval"):
            raise DatasetError(f"任务文件第 {index + 1} 行 split 无效: {split}")
        (eval_ if split == "eval" else train).append(item)

    if corpus and (train or eval_):
        raise DatasetError("任务文件不能混合分类样本与语料样本")
    try:
        dataset = TaskDataset(
            task_id=task_id or path.stem,
            kind="lm" if corpus else "classification",
            train=train,
            eval=eval_,
            corpus=corpus,
        )
    except ValidationError as e:
        raise DatasetError("任务文件切分无效", detail=str(e))
    logger.debug(f"已加载任务文件 {path}: train {len(train)} / eval {len(eval_)} / corpus {len(corpus)}")
    return dataset


_SUBJECTS = ["the old man", "a young girl", "the captain", "my brother", "the teacher", "a small boy",
             "the doctor", "her mother", "the farmer", "a quiet woman"]
_VERBS = ["opened", "found", "carried", "watched", "painted", "closed", "lost", "remembered",
          "followed", "cleaned"]
_OBJECTS = ["the door", "a letter", "the red box", "an old map", "the window", "a heavy bag",
            "the garden gate", "a blue book", "the wooden chair", "a silver key"]
_TAILS = ["before dinner", "in the morning", "after the rain", "without a word", "near the river",
          "at the station", "late at night", "with great care", "for a while", "once again"]


def synthetic_corpus(seed: int = 7, n_sentences: int = 2000) -> str:
    """由固定词表拼出的类英文句子，同一种子结果相同"""
    rng = random.Random(derive_seed("corpus", seed))
    sentences = []
    for _ in range(n_sentences):
        sentence = f"{rng.choice(_SUBJECTS)} {rng.choice(_VERBS)} {rng.choice(_OBJECTS)}"
        if rng.random() < 0.6:
            sentence += f" {rng.choice(_TAILS)}"
        sentences.append(sentence.capitalize() + ".")
    return " ".join(sentences)


def sample_shots(
    pool: Sequence[ClassificationItem], k: int, query: ClassificationItem, seed: int
) -> List[ClassificationItem]:
    """按 (seed, 查询样本) 派生的种子抽取 k 个示例，结果与样本在评测集中的顺序无关"""
    if k <= 0:
        return []
    candidates = [item for item in pool if item.key() != query.key()]
    if k > len(candidates):
        raise DatasetError("示例数超过训练池大小", detail={"shots": k, "pool": len(candidates)})
    rng = random.Random(derive_seed("shots", seed, json.dumps(query.key())))
    return rng.sample(candidates, k)


def assemble_few_shot(
    template: PromptTemplate, shots: Sequence[ClassificationItem], query: ClassificationItem
) -> str:
    """指令、K 个已解答示例、不带答案的查询，依次用分隔符拼接"""
    if any(s.key() == query.key() for s in shots):
        raise DatasetError("查询样本不能出现在示例中")
    blocks = [template.instruction] if template.instruction else []
    blocks.extend(template.render(s, with_answer=True) for s in shots)
    blocks.append(template.query_form(query))
    return template.separator.join(blocks)
