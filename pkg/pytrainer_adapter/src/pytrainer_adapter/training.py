"""Fine-tuning loops with best-validation-loss checkpoint selection."""

from __future__ import annotations

import copy
import re

import torch
from torch import nn
from torch.nn.utils.rnn import pad_sequence

from .config import AdapterConfig
from .data import SchemaError
from .models import (
    BOS,
    EOS,
    PAD,
    CharSeq2Seq,
    CharVocab,
    ClassifierHead,
    FrozenEncoder,
    featurize,
)
from .textmetrics import accuracy_block, rouge_block


class TrainingError(RuntimeError):
    pass


def _set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.set_num_threads(1)


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield range(start, min(start + batch_size, n))


def _scheduler(optimizer, cfg: AdapterConfig, total_steps: int):
    if cfg.schedule == "linear":
        return torch.optim.lr_scheduler.LambdaLR(
            optimizer, lambda step: max(0.0, 1.0 - step / max(1, total_steps))
        )
    return torch.optim.lr_scheduler.LambdaLR(optimizer, lambda step: 1.0)


def _norm_label(t: str) -> str:
    return re.sub(r"\s+", " ", t.strip()).lower()


def _train_with_selection(cfg, model, step_fn, val_loss_fn):
    """Run cfg.epochs epochs; restore the state with the best validation loss."""
    best_loss, best_state = float("inf"), copy.deepcopy(model.state_dict())
    for epoch in range(cfg.epochs):
        step_fn(epoch)
        val_loss = val_loss_fn()
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    return best_loss


def run_classification(cfg: AdapterConfig, card: dict, train, dev, test) -> dict:
    labels = sorted(card["task"]["label_set"])
    index = {_norm_label(label): i for i, label in enumerate(labels)}

    def target_tensor(rows):
        ids = []
        for row in rows:
            key = _norm_label(row["output"])
            if key not in index:
                raise SchemaError(
                    f"train/dev label {row['output']!r} not in task card label_set"
                )
            ids.append(index[key])
        return torch.tensor(ids)

    encoder = FrozenEncoder(cfg.feature_dim, cfg.hidden_dim)
    with torch.no_grad():
        encoded = {
            name: encoder(torch.stack([featurize(r["input"], cfg.feature_dim) for r in rows]))
            for name, rows in (("train", train), ("dev", dev), ("test", test))
        }
    y_train, y_dev = target_tensor(train), target_tensor(dev)

    _set_determinism(cfg.seed)
    head = ClassifierHead(cfg.hidden_dim, len(labels))
    optimizer = torch.optim.Adam(head.parameters(), lr=cfg.learning_rate)
    steps_per_epoch = max(1, (len(train) + cfg.batch_size - 1) // cfg.batch_size)
    scheduler = _scheduler(optimizer, cfg, cfg.epochs * steps_per_epoch)
    loss_fn = nn.CrossEntropyLoss()

    def step_fn(epoch):
        head.train()
        for batch in _batches(len(train), cfg.batch_size):
            idx = list(batch)
            optimizer.zero_grad()
            loss = loss_fn(head(encoded["train"][idx]), y_train[idx])
            loss.backward()
            optimizer.step()
            scheduler.step()

    def val_loss_fn():
        head.eval()
        with torch.no_grad():
            return loss_fn(head(encoded["dev"]), y_dev).item()

    _train_with_selection(cfg, head, step_fn, val_loss_fn)

    head.eval()
    metrics = {}
    for name, rows in (("dev", dev), ("test", test)):
        with torch.no_grad():
            predicted = head(encoded[name]).argmax(dim=-1)
        metrics[name] = accuracy_block(
            [labels[i] for i in predicted.tolist()], [r["output"] for r in rows]
        )
    return metrics


def run_generation(cfg: AdapterConfig, card: dict, train, dev, test) -> dict:
    vocab = CharVocab([r["input"] for r in train] + [r["output"] for r in train])

    def pack(rows):
        src = pad_sequence(
            [torch.tensor(vocab.encode(r["input"])) for r in rows],
            batch_first=True, padding_value=PAD,
        )
        tgt_in = pad_sequence(
            [torch.tensor([BOS] + vocab.encode(r["output"])) for r in rows],
            batch_first=True, padding_value=PAD,
        )
        tgt_out = pad_sequence(
            [torch.tensor(vocab.encode(r["output"]) + [EOS]) for r in rows],
            batch_first=True, padding_value=PAD,
        )
        return src, tgt_in, tgt_out

    _set_determinism(cfg.seed)
    model = CharSeq2Seq(vocab.size, cfg.hidden_dim)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    steps_per_epoch = max(1, (len(train) + cfg.batch_size - 1) // cfg.batch_size)
    scheduler = _scheduler(optimizer, cfg, cfg.epochs * steps_per_epoch)
    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD)
    dev_src, dev_tgt_in, dev_tgt_out = pack(dev)

    def step_fn(epoch):
        model.train()
        for batch in _batches(len(train), cfg.batch_size):
            rows = [train[i] for i in batch]
            src, tgt_in, tgt_out = pack(rows)
            optimizer.zero_grad()
            logits = model(src, tgt_in)
            loss = loss_fn(logits.reshape(-1, vocab.size), tgt_out.reshape(-1))
            loss.backward()
            optimizer.step()
            scheduler.step()

    def val_loss_fn():
        model.eval()
        with torch.no_grad():
            logits = model(dev_src, dev_tgt_in)
            return loss_fn(logits.reshape(-1, vocab.size), dev_tgt_out.reshape(-1)).item()

    _train_with_selection(cfg, model, step_fn, val_loss_fn)

    model.eval()
    metrics = {}
    for name, rows in (("dev", dev), ("test", test)):
        pairs = []
        for row in rows:
            ids = model.greedy_decode(torch.tensor(vocab.encode(row["input"])))
            pairs.append((vocab.decode(ids), row["output"]))
        metrics[name] = rouge_block(pairs)
    return metrics


def run_training(cfg: AdapterConfig, card: dict, train, dev, test) -> dict:
    runner = run_classification if card["task"]["kind"] == "classification" else run_generation
    try:
        return runner(cfg, card, train, dev, test)
    except SchemaError:
        raise
    except Exception as e:
        raise TrainingError(f"training failed: {e}") from e
