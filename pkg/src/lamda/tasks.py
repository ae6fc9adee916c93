"""Synthetic next-token tasks that make desk-scale fine-tuning verifiable.

copy / reverse: the input is [x_0..x_{m-1}, SEP, y_0..y_{m-1}] with
y = x (copy) or y = reversed(x) (reverse); only the positions producing
y are scored, so a causal model must retrieve earlier tokens. modsum is
a running (a+b) mod vocab recurrence scored everywhere. "text:<path>"
samples windows from a plain-text character corpus.
"""

import numpy as np

from .errors import ConfigError

IGNORE = -1


class Task:
    def __init__(self, name, seq_len, seed):
        self.name = name
        self.seq_len = seq_len
        self.rng = np.random.default_rng(seed)

    def batch(self, batch_size):
        raise NotImplementedError


class _PairTask(Task):
    """Shared machinery for copy/reverse: emit x, SEP, transform(x)."""

    reverse = False

    def __init__(self, name, vocab, context, seed):
        if context % 2 != 0 or context < 4:
            raise ConfigError(f"copy/reverse need an even context >= 4, got {context}")
        if vocab < 3:
            raise ConfigError("copy/reverse need vocab >= 3")
        super().__init__(name, context, seed)
        self.half = context // 2
        self.sep = vocab - 1
        self.alphabet = vocab - 1

    def batch(self, batch_size):
        m = self.half
        x = self.rng.integers(0, self.alphabet, size=(batch_size, m))
        y = x[:, ::-1] if self.reverse else x
        full = np.concatenate(
            [x, np.full((batch_size, 1), self.sep), y], axis=1
        ).astype(np.int64)
        inputs = full[:, : 2 * m]
        targets = full[:, 1 : 2 * m + 1].copy()
        targets[:, : m] = IGNORE  # only the y half is scored
        return inputs, targets


class CopyTask(_PairTask):
    reverse = False


class ReverseTask(_PairTask):
    reverse = True


class ModSumTask(Task):
    def __init__(self, vocab, context, seed):
        super().__init__("modsum", context, seed)
        self.vocab = vocab

    def batch(self, batch_size):
        n = self.seq_len
        seq = np.zeros((batch_size, n + 1), dtype=np.int64)
        seq[:, :2] = self.rng.integers(0, self.vocab, size=(batch_size, 2))
        for i in range(2, n + 1):
            seq[:, i] = (seq[:, i - 1] + seq[:, i - 2]) % self.vocab
        return seq[:, :n], seq[:, 1:].copy()


class TextTask(Task):
    """Character-level windows from a plain-text file."""

    def __init__(self, path, vocab, context, seed):
        super().__init__(f"text:{path}", context, seed)
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        if len(text) <= context + 1:
            raise ConfigError(f"corpus {path} shorter than one context window")
        chars = sorted(set(text))
        if len(chars) > vocab:
            raise ConfigError(
                f"corpus has {len(chars)} distinct chars but vocab is {vocab}"
            )
        lut = {c: i for i, c in enumerate(chars)}
        self.ids = np.array([lut[c] for c in text], dtype=np.int64)
        self.chars = chars

    def batch(self, batch_size):
        n = self.seq_len
        starts = self.rng.integers(0, self.ids.shape[0] - n - 1, size=batch_size)
        inputs = np.stack([self.ids[s : s + n] for s in starts])
        targets = np.stack([self.ids[s + 1 : s + n + 1] for s in starts])
        return inputs, targets


def make_task(task_id, vocab, context, seed=0):
    if task_id == "copy":
        return CopyTask("copy", vocab, context, seed)
    if task_id == "reverse":
        return ReverseTask("reverse", vocab, context, seed)
    if task_id == "modsum":
        return ModSumTask(vocab, context, seed)
    if task_id.startswith("text:"):
        return TextTask(task_id[5:], vocab, context, seed)
    raise ConfigError(f"unknown task {task_id!r}")
