from .generator import (
    AdaptationBudget,
    CorpusSpec,
    ShiftSpec,
    SpeakerData,
    SpeakerShift,
    class_means,
    export_frames,
    gen_base_corpus,
    gen_speaker,
    load_frames,
    make_speaker_shift,
    truncate_budget,
)
from .probe import ForgettingReport, forgetting_probe, mean_posterior_kl

__all__ = [
    "AdaptationBudget", "CorpusSpec", "ShiftSpec", "SpeakerData", "SpeakerShift", "class_means",
    "export_frames", "gen_base_corpus", "gen_speaker", "load_frames", "make_speaker_shift",
    "truncate_budget", "ForgettingReport", "forgetting_probe", "mean_posterior_kl",
]
