"""Trainable natural language understanding: BIO slot tagging plus
multi-label intent detection over mean-pooled token embeddings.

Deliberately small (32-dim embeddings, single linear heads) so it can err on
unseen paraphrases while still being trainable with hand-written gradients.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .acts import DONTCARE, VALUED_INTENTS, ActionVocabulary, DialogAct
from .nets import AdamW, Linear, log_softmax, sigmoid
from .nlg import Banks, LabeledUtterance
from .ontology import EntityDatabase, Ontology

UNK = "<unk>"
NUM = "<num>"
ALNUM = "<alnum>"
TAG_O = "O"


def shape_token(token: str) -> str:
    """Collapse open-class tokens (digits, codes) onto shape archetypes so
    tagging generalizes across entity-specific values like phone numbers."""
    if token.isdigit():
        return NUM
    if any(c.isdigit() for c in token):
        return ALNUM
    return token


def label_spaces(ontology: Ontology) -> tuple[list[str], list[tuple[str, str, str]]]:
    """(BIO tag list, valueless intent-label list) for both pipeline sides."""
    valued: set[tuple[str, str, str]] = set()
    valueless: set[tuple[str, str, str]] = set()
    for side in ("system", "user"):
        for act in ActionVocabulary.build(ontology, side):
            triple = (act.intent, act.domain, act.slot)
            if act.intent in VALUED_INTENTS:
                valued.add(triple)
            else:
                valueless.add(triple)
    tags = [TAG_O]
    for intent, domain, slot in sorted(valued):
        tags.append(f"b-{intent}-{domain}-{slot}")
        tags.append(f"i-{intent}-{domain}-{slot}")
    return tags, sorted(valueless)


def build_token_vocab(banks: Banks, db: EntityDatabase) -> list[str]:
    """Every shaped token realizable from any bank or entity value, plus UNK."""
    tokens: set[str] = {DONTCARE, NUM, ALNUM}
    for bank in (banks.system, banks.user, banks.offline):
        tokens |= {shape_token(t) for t in bank.all_tokens()}
    for records in db.entities.values():
        for record in records:
            for value in record.values():
                tokens.update(shape_token(t) for t in value.split())
    return [UNK] + sorted(tokens)


@dataclass
class NluBatch:
    """Training batch with per-example provenance (offline vs augmented)."""

    examples: list[LabeledUtterance]
    provenance: list[str] = field(default_factory=list)


SENTENCE_ENDS = {".", "?", "!"}


def sentence_spans(tokens) -> list[tuple[int, int]]:
    """[start, end) spans split on terminal punctuation; whole-utterance
    fallback when no terminal is present."""
    spans = []
    start = 0
    for i, token in enumerate(tokens):
        if token in SENTENCE_ENDS:
            spans.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans or [(0, len(tokens))]


class NluModel:
    """Embeddings + per-token tag head + pooled multi-label intent head.

    The tag head sees [token embedding; +-3-token window mean; utterance
    mean]; the window term localizes context inside multi-sentence turns.
    The intent head is a linear map on sentence-mean embeddings, maxed over
    the utterance's sentences (multi-instance detection), so one question
    inside a long turn is not diluted away.
    """

    INTENT_THRESHOLD = 0.5
    WINDOW = 3

    def __init__(self, tokens: list[str], tags: list[str], intents: list[tuple[str, str, str]],
                 emb_dim: int = 32, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x41C)))
        self.tokens = list(tokens)
        self.token_index = {t: i for i, t in enumerate(self.tokens)}
        self.tags = list(tags)
        self.tag_index = {t: i for i, t in enumerate(self.tags)}
        self.intents = [tuple(i) for i in intents]
        self.intent_index = {t: i for i, t in enumerate(self.intents)}
        self.emb_dim = emb_dim
        self.emb = rng.normal(0.0, 1.0, size=(len(self.tokens), emb_dim))
        self.demb = np.zeros_like(self.emb)
        self.slot_head = Linear(3 * emb_dim, len(self.tags), rng)
        self.intent_head = Linear(emb_dim, len(self.intents), rng)

    # -- parameter plumbing -------------------------------------------------
    def parameters(self):
        return [(self.emb, self.demb)] + self.slot_head.parameters() + self.intent_head.parameters()

    def zero_grad(self) -> None:
        self.demb[...] = 0.0
        self.slot_head.zero_grad()
        self.intent_head.zero_grad()

    def clone(self) -> "NluModel":
        return copy.deepcopy(self)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.token_index.get(shape_token(t), 0) for t in tokens], dtype=np.int64)

    # -- forward ------------------------------------------------------------
    def _window_bounds(self, T: int, lengths: np.ndarray):
        pos = np.arange(T)
        hi = np.minimum(pos + self.WINDOW + 1, lengths[:, None])   # (B, T)
        lo = np.minimum(np.maximum(pos - self.WINDOW, 0), hi)
        width = np.maximum(hi - lo, 1)
        return lo, hi, width

    def _window_sum(self, values: np.ndarray, lengths: np.ndarray):
        """Per-position sum of `values` over the +-WINDOW neighborhood,
        clipped to each row's true length (rows beyond it read as zero)."""
        B, T, e = values.shape
        csum = np.concatenate([np.zeros((B, 1, e)), np.cumsum(values, axis=1)], axis=1)
        lo, hi, width = self._window_bounds(T, lengths)
        rows = np.arange(B)[:, None]
        return csum[rows, hi] - csum[rows, lo], width

    def _tag_logits(self, E: np.ndarray, pooled: np.ndarray, lengths: np.ndarray):
        e = self.emb_dim
        W_tok = self.slot_head.W[:e]
        W_win = self.slot_head.W[e : 2 * e]
        W_pool = self.slot_head.W[2 * e :]
        window_sum, width = self._window_sum(E, lengths)
        window = window_sum / width[:, :, None]
        logits = E @ W_tok + window @ W_win + (pooled @ W_pool + self.slot_head.b)[:, None, :]
        return logits, window, width

    def _intent_logits(self, E_row: np.ndarray, spans) -> np.ndarray:
        pooled = np.stack([E_row[a:b].mean(axis=0) for a, b in spans])
        return self.intent_head.forward(pooled).max(axis=0)

    def predict(self, tokens) -> set[DialogAct]:
        """Decode one utterance into a dialog-act set (pure given parameters)."""
        tokens = list(tokens)
        if not tokens:
            return set()
        ids = self.encode(tokens)[None, :]
        lengths = np.array([ids.shape[1]], dtype=np.int64)
        E = self.emb[ids]
        pooled = E.mean(axis=1)
        logits, _, _ = self._tag_logits(E, pooled, lengths)
        tag_ids = np.argmax(logits[0], axis=1)
        intent_probs = sigmoid(self._intent_logits(E[0], sentence_spans(tokens))[None, :])[0]
        acts: set[DialogAct] = set()
        # BIO decode; a dangling i- tag is repaired by treating it as b-
        span_label: str | None = None
        span_tokens: list[str] = []

        def flush():
            nonlocal span_label, span_tokens
            if span_label is not None:
                intent, domain, slot = span_label.split("-")
                acts.add(DialogAct(intent, domain, slot, " ".join(span_tokens)))
            span_label, span_tokens = None, []

        for token, tag_id in zip(tokens, tag_ids):
            tag = self.tags[tag_id]
            if tag == TAG_O:
                flush()
            elif tag.startswith("b-"):
                flush()
                span_label, span_tokens = tag[2:], [token]
            else:  # i- tag
                label = tag[2:]
                if span_label == label:
                    span_tokens.append(token)
                else:
                    flush()
                    span_label, span_tokens = label, [token]
        flush()
        for idx in np.nonzero(intent_probs > self.INTENT_THRESHOLD)[0]:
            intent, domain, slot = self.intents[idx]
            acts.add(DialogAct(intent, domain, slot))
        return acts

    # -- loss / gradients ---------------------------------------------------
    def _pad_batch(self, examples):
        lengths = np.array([len(ex.tokens) for ex in examples], dtype=np.int64)
        T = int(lengths.max())
        B = len(examples)
        ids = np.zeros((B, T), dtype=np.int64)
        mask = np.zeros((B, T), dtype=bool)
        tag_targets = np.zeros((B, T), dtype=np.int64)
        intent_targets = np.zeros((B, len(self.intents)))
        for i, ex in enumerate(examples):
            n = len(ex.tokens)
            ids[i, :n] = self.encode(ex.tokens)
            mask[i, :n] = True
            tag_targets[i, :n] = [self.tag_index[t] for t in ex.slot_tags]
            for triple in ex.intents:
                intent_targets[i, self.intent_index[triple]] = 1.0
        return ids, mask, lengths, tag_targets, intent_targets

    def loss_and_grads(self, batch: NluBatch) -> float:
        """Summed tag-CE mean and intent-BCE mean; gradients accumulate into
        the parameter buffers (call zero_grad first)."""
        examples = [ex for ex in batch.examples if ex.tokens]
        if not examples:
            raise ValueError("batch has no non-empty examples")
        ids, mask, lengths, tag_targets, intent_targets = self._pad_batch(examples)
        B, T = ids.shape
        e = self.emb_dim

        E = self.emb[ids] * mask[:, :, None]
        pooled = E.sum(axis=1) / lengths[:, None]
        tag_logits, window, width = self._tag_logits(E, pooled, lengths)

        # intent path: linear head on per-sentence means, maxed per example
        spans_per_example = [sentence_spans(ex.tokens) for ex in examples]
        sent_rows = []
        sent_owner = []
        for i, spans in enumerate(spans_per_example):
            for a, b in spans:
                sent_rows.append(E[i, a:b].sum(axis=0) / (b - a))
                sent_owner.append(i)
        sent_pooled = np.stack(sent_rows)
        sent_logits = self.intent_head.forward(sent_pooled)
        intent_logits = np.full((B, len(self.intents)), -np.inf)
        argmax_row = np.zeros((B, len(self.intents)), dtype=np.int64)
        for row, owner in enumerate(sent_owner):
            better = sent_logits[row] > intent_logits[owner]
            argmax_row[owner][better] = row
            intent_logits[owner] = np.maximum(intent_logits[owner], sent_logits[row])

        n_tokens = int(mask.sum())
        log_p = log_softmax(tag_logits, axis=2)
        picked = np.take_along_axis(log_p, tag_targets[:, :, None], axis=2)[:, :, 0]
        loss_slot = -(picked * mask).sum() / n_tokens

        probs = sigmoid(intent_logits)
        eps = 1e-12
        bce = -(intent_targets * np.log(probs + eps) + (1 - intent_targets) * np.log(1 - probs + eps))
        loss_intent = bce.mean()

        # backward: d loss_slot / d tag_logits
        dlogits = np.exp(log_p)
        np.put_along_axis(
            dlogits, tag_targets[:, :, None],
            np.take_along_axis(dlogits, tag_targets[:, :, None], axis=2) - 1.0, axis=2,
        )
        dlogits *= mask[:, :, None] / n_tokens
        dlogits_flat = dlogits.reshape(B * T, -1)
        dlogits_pooled = dlogits.sum(axis=1)
        W_tok = self.slot_head.W[:e]
        W_win = self.slot_head.W[e : 2 * e]
        W_pool = self.slot_head.W[2 * e :]
        self.slot_head.dW[:e] += E.reshape(B * T, e).T @ dlogits_flat
        self.slot_head.dW[e : 2 * e] += window.reshape(B * T, e).T @ dlogits_flat
        self.slot_head.dW[2 * e :] += pooled.T @ dlogits_pooled
        self.slot_head.db += dlogits_flat.sum(axis=0)

        # max routes each (example, label) gradient to its best sentence
        dintent_logits = (probs - intent_targets) / intent_targets.size
        dsent_logits = np.zeros_like(sent_logits)
        cols = np.arange(len(self.intents))
        for owner in range(B):
            np.add.at(dsent_logits, (argmax_row[owner], cols), dintent_logits[owner])
        dsent_pooled = self.intent_head.backward(sent_pooled, dsent_logits)
        dpooled = dlogits_pooled @ W_pool.T

        dE = dlogits @ W_tok.T
        # adjoint of the clipped window mean: spread d(window)/width back over
        # the same +-WINDOW neighborhood
        dwindow = (dlogits @ W_win.T) / width[:, :, None]
        dE = dE + self._window_sum(dwindow, lengths)[0]
        dE = dE + (dpooled / lengths[:, None])[:, None, :]
        row = 0
        for i, spans in enumerate(spans_per_example):
            for a, b in spans:
                dE[i, a:b] += dsent_pooled[row] / (b - a)
                row += 1
        dE = dE * mask[:, :, None]
        np.add.at(self.demb, ids.reshape(-1), dE.reshape(B * T, e))

        return float(loss_slot + loss_intent)


def evaluate_f1(model: NluModel, examples) -> tuple[float, float, float]:
    """Micro-averaged act-level precision/recall/F1 over labeled utterances."""
    tp = n_pred = n_gold = 0
    for ex in examples:
        predicted = model.predict(ex.tokens)
        gold = set(ex.acts)
        tp += len(predicted & gold)
        n_pred += len(predicted)
        n_gold += len(gold)
    precision = tp / n_pred if n_pred else (1.0 if n_gold == 0 else 0.0)
    recall = tp / n_gold if n_gold else (1.0 if n_pred == 0 else 0.0)
    if precision + recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def train_nlu(
    model: NluModel,
    offline: list[LabeledUtterance],
    augmented: list[LabeledUtterance],
    steps: int,
    rng: np.random.Generator,
    lr: float = 3e-3,
    weight_decay: float = 0.01,
    batch_augmented: int = 32,
    batch_offline: int = 8,
    holdout: list[LabeledUtterance] | None = None,
    optimizer: AdamW | None = None,
) -> tuple[float, float | None]:
    """Mixed-batch updates (32 augmented + 8 offline when both available).

    Returns (mean loss over steps, held-out micro F1 or None).
    """
    if not offline:
        raise ValueError("offline corpus must be non-empty")
    if optimizer is None and steps > 0:
        optimizer = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    losses = []
    total = batch_augmented + batch_offline
    for _ in range(steps):
        if augmented:
            picks_aug = rng.integers(len(augmented), size=batch_augmented)
            picks_off = rng.integers(len(offline), size=batch_offline)
            examples = [augmented[i] for i in picks_aug] + [offline[i] for i in picks_off]
            provenance = ["augmented"] * batch_augmented + ["offline"] * batch_offline
        else:
            picks_off = rng.integers(len(offline), size=total)
            examples = [offline[i] for i in picks_off]
            provenance = ["offline"] * total
        model.zero_grad()
        losses.append(model.loss_and_grads(NluBatch(examples, provenance)))
        optimizer.step()
    f1 = evaluate_f1(model, holdout)[2] if holdout is not None else None
    return (float(np.mean(losses)) if losses else 0.0), f1
