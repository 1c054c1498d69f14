"""
Synthetic paired-sentence benchmark.

Each latent topic owns a small vocabulary, disjoint from the other topics.
An entity of a topic is a two-token phrase that opens both its question and
its answer; the rest of each text is two topic words and a run of filler
words shared by every topic. At random initialization the fillers dominate
the bag of n-grams, so questions barely find their answers; a trained
encoder learns to weigh the entity phrase over the fillers. Every split
holds one fresh realization (new topic and filler words) of the same
entities. The train split also gets labeled negatives: a question paired
with the answer of another entity of the same topic.
"""

from typing import List, Sequence

import numpy as np
from loguru import logger

from ..batching.records import PairRecord
from ..common.error_handler import ContractError

TOPIC_NAMES = (
    "astro", "botany", "chem", "dance", "econ", "film", "geo", "hist",
    "jazz", "kelp", "logic", "music", "naval", "optic", "poetry", "quartz",
)

FILLER_WORDS = ("about", "across", "after", "along", "around")

WORDS_PER_TOPIC = 12
TOPIC_WORDS_PER_TEXT = 2
FILLERS_PER_TEXT = 6

SPLITS = ("train", "dev", "test")


def topic_vocabulary(topic: int) -> List[str]:
    name = TOPIC_NAMES[topic]
    return [f"{name}{j:02d}" for j in range(WORDS_PER_TOPIC)]


def entity_phrase(topic: int, entity: int) -> List[str]:
    """The two tokens naming an entity on both sides of its pair."""
    name = TOPIC_NAMES[topic]
    return [f"{name}x{entity:03d}", f"{name}y{entity:03d}"]


def _realize(phrase: Sequence[str], vocabulary: Sequence[str], rng: np.random.Generator) -> str:
    topic_words = [vocabulary[i] for i in rng.choice(len(vocabulary), size=TOPIC_WORDS_PER_TEXT, replace=False)]
    fillers = [FILLER_WORDS[i] for i in rng.integers(len(FILLER_WORDS), size=FILLERS_PER_TEXT)]
    rest = topic_words + fillers
    return " ".join(list(phrase) + [rest[i] for i in rng.permutation(len(rest))])


def generate_synthetic_benchmark(
    topics: int = 8,
    pairs_per_topic: int = 40,
    negative_fraction: float = 0.2,
    seed: int = 0,
) -> List[PairRecord]:
    """
    Generate the benchmark.

    Args:
        topics: Number of latent topics
        pairs_per_topic: Entities per topic
        negative_fraction: Labeled negatives added to train, as a fraction of train positives
        seed: Random seed

    Returns:
        Records of all splits (train first, then dev, then test)
    """
    if not 1 <= topics <= len(TOPIC_NAMES):
        raise ContractError(f"topics must be between 1 and {len(TOPIC_NAMES)}, got {topics}")
    if pairs_per_topic < 2:
        raise ContractError(f"pairs_per_topic must be >= 2, got {pairs_per_topic}")
    if not 0.0 <= negative_fraction <= 1.0:
        raise ContractError(f"negative_fraction must be in [0, 1], got {negative_fraction}")

    rng = np.random.default_rng(seed)
    records: List[PairRecord] = []
    train_positives: List[PairRecord] = []

    for split in SPLITS:
        for topic in range(topics):
            name = TOPIC_NAMES[topic]
            vocabulary = topic_vocabulary(topic)
            for entity in range(pairs_per_topic):
                phrase = entity_phrase(topic, entity)
                record = PairRecord(
                    record_id=f"{split}-{name}-{entity:03d}",
                    text_q=_realize(phrase, vocabulary, rng),
                    text_a=_realize(phrase, vocabulary, rng),
                    label=1.0,
                    group_key=f"{name}-{entity:03d}",
                    split=split,
                )
                records.append(record)
                if split == "train":
                    train_positives.append(record)

    n_negatives = int(round(negative_fraction * len(train_positives)))
    negatives: List[PairRecord] = []
    for n in range(n_negatives):
        source = train_positives[int(rng.integers(len(train_positives)))]
        name, entity = source.group_key.split("-")
        topic = TOPIC_NAMES.index(name)
        other = int(rng.integers(pairs_per_topic - 1))
        other = other + 1 if other >= int(entity) else other
        negatives.append(PairRecord(
            record_id=f"train-neg-{n:04d}",
            text_q=source.text_q,
            text_a=_realize(entity_phrase(topic, other), topic_vocabulary(topic), rng),
            label=0.0,
            group_key=source.group_key,
            split="train",
        ))

    n_train = len(train_positives)
    records = records[:n_train] + negatives + records[n_train:]
    logger.info(
        f"Generated synthetic benchmark: {topics} topics x {pairs_per_topic} entities, "
        f"{n_train} train positives, {len(negatives)} negatives, {len(records) - n_train - len(negatives)} dev/test pairs"
    )
    return records
