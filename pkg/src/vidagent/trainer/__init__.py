from .data import (
    CHOSEN,
    REJECTED,
    EmptyPool,
    ExperienceBank,
    Item,
    KtoExample,
    KtoRules,
    Recorder,
    build_rl_mix,
    build_sft_corpus,
    enhance_dataset,
    label_kto,
    make_items,
    reference_items,
)
from .grpo import DegenerateGroup, GrpoConfig, group_advantages, run_grpo
from .kto import SingleLabelCorpus, run_kto
from .optim import Adam
from .pipeline import StageSettings, run_pipeline
from .sft import EmptyCorpus, SftExample, run_sft

__all__ = [
    "CHOSEN",
    "REJECTED",
    "Adam",
    "DegenerateGroup",
    "EmptyCorpus",
    "EmptyPool",
    "ExperienceBank",
    "GrpoConfig",
    "Item",
    "KtoExample",
    "KtoRules",
    "Recorder",
    "SftExample",
    "SingleLabelCorpus",
    "StageSettings",
    "build_rl_mix",
    "build_sft_corpus",
    "enhance_dataset",
    "group_advantages",
    "label_kto",
    "make_items",
    "reference_items",
    "run_grpo",
    "run_kto",
    "run_pipeline",
    "run_sft",
]
