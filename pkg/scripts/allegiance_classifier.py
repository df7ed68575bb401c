"""
Vote-Share Toolkit — Allegiance Classifier

Multinomial Naive Bayes over bag-of-words counts. Turns tweet text into an
allegiance score A in [0, 1]: the posterior probability that the tweet is
positive (p) rather than negative (n) toward the party it mentions.
"""

import json
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from nltk.tokenize import TweetTokenizer
from scipy.special import expit
from scipy.stats import rankdata
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics import confusion_matrix, f1_score
from sklearn.naive_bayes import MultinomialNB

from scripts.corpus_ingest import URL_RE
from scripts.errors import InputError, TrainingDataError
from scripts.parties import PARTY_GROUPS, party_group

logger = logging.getLogger(__name__)

LABELS = ("n", "p")
THRESHOLD = 0.5
ARTIFACT_FORMAT = "votesharekit-nb"

_tokenizer = TweetTokenizer(preserve_case=False)


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise TrainingDataError(f"Label must be 'n' or 'p', got {self.label!r}")


@dataclass(frozen=True)
class NBModel:
    """Trained classifier: vocabulary order, class log-priors [n, p] and per-class token log-likelihoods."""

    vocabulary: tuple
    alpha: float
    class_log_prior: np.ndarray
    feature_log_prob: np.ndarray
    ngram_range: tuple = (1, 1)
    class_count: tuple = (0, 0)

    @property
    def prior_p(self) -> float:
        return float(np.exp(self.class_log_prior[1]))

    def __eq__(self, other):
        if not isinstance(other, NBModel):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and self.alpha == other.alpha
            and tuple(self.ngram_range) == tuple(other.ngram_range)
            and np.array_equal(self.class_log_prior, other.class_log_prior)
            and np.array_equal(self.feature_log_prob, other.feature_log_prob)
        )


@dataclass
class ClassifierMetrics:
    f1_n: float
    f1_p: float
    roc_auc: float
    confusion: list
    accuracy: float
    n_test: int
    support: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "f1_n": self.f1_n,
            "f1_p": self.f1_p,
            "roc_auc": self.roc_auc,
            "confusion": self.confusion,
            "accuracy": self.accuracy,
            "n_test": self.n_test,
            "support": self.support,
        }


# =============================================================================
# Tokenization
# =============================================================================

def _is_punctuation(token: str) -> bool:
    return all(unicodedata.category(c).startswith("P") for c in token)


def tokenize(text: str) -> list[str]:
    """Lowercased tweet tokens; hashtags and mentions stay whole, URLs and punctuation go."""
    if not text:
        return []
    return [t for t in _tokenizer.tokenize(URL_RE.sub(" ", text)) if not _is_punctuation(t)]


def _vectorizer(ngram_range=(1, 1), vocabulary=None) -> CountVectorizer:
    return CountVectorizer(
        tokenizer=tokenize,
        lowercase=False,
        token_pattern=None,
        ngram_range=tuple(ngram_range),
        vocabulary=vocabulary,
    )


# =============================================================================
# Training and prediction
# =============================================================================

def train_nb(examples: list[LabeledExample], alpha: float = 1.0, ngram_range=(1, 1)) -> NBModel:
    """
    Fit class priors from label frequencies and Laplace/Lidstone-smoothed
    token likelihoods: (count(t, c) + alpha) / (tokens(c) + alpha * |V|).
    """
    if alpha <= 0:
        raise TrainingDataError(f"Smoothing alpha must be > 0, got {alpha}")
    labels = [e.label for e in examples]
    if len(set(labels)) < 2:
        raise TrainingDataError("Training data must contain both n and p examples")

    vectorizer = _vectorizer(ngram_range)
    try:
        counts = vectorizer.fit_transform([e.text for e in examples])
    except ValueError as e:
        raise TrainingDataError(f"Cannot build a vocabulary: {e}") from e
    y = np.array([LABELS.index(label) for label in labels])

    nb = MultinomialNB(alpha=alpha, force_alpha=True, fit_prior=True)
    nb.fit(counts, y)

    vocabulary = tuple(vectorizer.get_feature_names_out().tolist())
    logger.debug("Trained NB on %d examples, |V| = %d", len(examples), len(vocabulary))
    return NBModel(
        vocabulary=vocabulary,
        alpha=float(alpha),
        class_log_prior=nb.class_log_prior_.astype(float),
        feature_log_prob=nb.feature_log_prob_.astype(float),
        ngram_range=tuple(ngram_range),
        class_count=tuple(int(c) for c in nb.class_count_),
    )


def predict_allegiance_batch(m: NBModel, texts) -> np.ndarray:
    """Posterior P(p | text) for each text; out-of-vocabulary tokens are skipped."""
    texts = list(texts)
    if not texts:
        return np.empty(0)
    vocabulary = {token: i for i, token in enumerate(m.vocabulary)}
    cleaned = ["" if pd.isna(t) else str(t) for t in texts]
    counts = _vectorizer(m.ngram_range, vocabulary).transform(cleaned)
    joint = counts @ m.feature_log_prob.T + m.class_log_prior
    return expit(np.asarray(joint[:, 1] - joint[:, 0]).ravel())


def predict_allegiance(m: NBModel, text: str) -> float:
    return float(predict_allegiance_batch(m, [text])[0])


def score_records(table: pd.DataFrame, models: dict) -> pd.DataFrame:
    """Fill the allegiance column using the model trained for each record's party group."""
    if "text" not in table.columns:
        raise InputError("Scoring needs a text column")
    scored = table.copy()
    scored["allegiance"] = np.nan
    groups = scored["party"].map(party_group)
    for group, index in scored.groupby(groups).groups.items():
        if group not in models:
            raise TrainingDataError(f"No allegiance model for party group {group}")
        scored.loc[index, "allegiance"] = predict_allegiance_batch(models[group], scored.loc[index, "text"])
    return scored


# =============================================================================
# Evaluation
# =============================================================================

def split_train_test(examples: list[LabeledExample], fraction: float = 0.85,
                     seed: int = 0) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Stratified split; each class keeps round(fraction * n) examples for training."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in LABELS:
        idx = np.array([i for i, e in enumerate(examples) if e.label == label])
        if idx.size < 2:
            raise TrainingDataError(f"Class {label!r} needs at least 2 examples to split, has {idx.size}")
        n_train = min(max(int(fraction * idx.size + 0.5), 1), idx.size - 1)
        shuffled = idx[rng.permutation(idx.size)]
        train_idx.extend(shuffled[:n_train].tolist())
        test_idx.extend(shuffled[n_train:].tolist())
    return [examples[i] for i in sorted(train_idx)], [examples[i] for i in sorted(test_idx)]


def roc_auc(y_true, scores) -> float:
    """Rank-sum (Mann-Whitney) AUC with average ranks for ties."""
    y_true = np.asarray(y_true, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(y_true.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingDataError("ROC AUC is undefined when the test set has a single class")
    ranks = rankdata(scores, method="average")
    return float((ranks[y_true].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metrics_from_scores(labels, scores) -> ClassifierMetrics:
    """F1 per class from confusion counts at A > 0.5, plus rank-statistic AUC."""
    y_true = np.array([LABELS.index(label) for label in labels])
    scores = np.asarray(scores, dtype=float)
    auc = roc_auc(y_true == 1, scores)
    y_pred = (scores > THRESHOLD).astype(int)
    confusion = confusion_matrix(y_true, y_pred, labels=[0, 1])
    return ClassifierMetrics(
        f1_n=float(f1_score(y_true, y_pred, pos_label=0, zero_division=0)),
        f1_p=float(f1_score(y_true, y_pred, pos_label=1, zero_division=0)),
        roc_auc=auc,
        confusion=confusion.tolist(),
        accuracy=float(np.trace(confusion) / confusion.sum()),
        n_test=int(y_true.size),
        support={"n": int((y_true == 0).sum()), "p": int((y_true == 1).sum())},
    )


def evaluate(m: NBModel, test: list[LabeledExample]) -> ClassifierMetrics:
    if not test:
        raise TrainingDataError("Test set is empty")
    scores = predict_allegiance_batch(m, [e.text for e in test])
    return metrics_from_scores([e.label for e in test], scores)


# =============================================================================
# Artifacts
# =============================================================================

def load_labeled_csv(path) -> list[LabeledExample]:
    """Read `text,label` rows (label n or p)."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise TrainingDataError(f"Cannot read training data {path}: {e}") from e
    if not {"text", "label"} <= set(frame.columns):
        raise TrainingDataError(f"{path}: expected columns text,label")
    labels = frame["label"].str.strip().str.lower()
    bad = sorted(set(labels) - set(LABELS))
    if bad:
        raise TrainingDataError(f"{path}: unknown labels {bad}")
    return [LabeledExample(text, label) for text, label in zip(frame["text"], labels)]


def model_to_dict(m: NBModel) -> dict:
    return {
        "format": ARTIFACT_FORMAT,
        "version": 1,
        "classes": list(LABELS),
        "alpha": m.alpha,
        "ngram_range": list(m.ngram_range),
        "class_count": list(m.class_count),
        "class_log_prior": m.class_log_prior.tolist(),
        "vocabulary": list(m.vocabulary),
        "feature_log_prob": m.feature_log_prob.tolist(),
    }


def save_model(m: NBModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), sort_keys=True, ensure_ascii=False), encoding="utf-8")


def load_model(path) -> NBModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Cannot load model artifact {path}: {e}") from e
    if doc.get("format") != ARTIFACT_FORMAT:
        raise InputError(f"{path} is not an allegiance model artifact")
    feature_log_prob = np.array(doc["feature_log_prob"], dtype=float).reshape(2, len(doc["vocabulary"]))
    return NBModel(
        vocabulary=tuple(doc["vocabulary"]),
        alpha=float(doc["alpha"]),
        class_log_prior=np.array(doc["class_log_prior"], dtype=float),
        feature_log_prob=feature_log_prob,
        ngram_range=tuple(doc["ngram_range"]),
        class_count=tuple(doc.get("class_count", (0, 0))),
    )


__all__ = [
    "PARTY_GROUPS", "party_group", "LabeledExample", "NBModel", "ClassifierMetrics", "tokenize",
    "train_nb", "predict_allegiance", "predict_allegiance_batch", "score_records", "split_train_test",
    "roc_auc", "metrics_from_scores", "evaluate", "load_labeled_csv", "save_model", "load_model",
]
