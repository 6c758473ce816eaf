"""Baseline intent classifier and slot tagger."""
from .crf import CrfModel, bio_to_spans, check_bio, tag, to_bio, train_ner, viterbi
from .maxent import MaxEntModel, classify, ic_features, train_ic
