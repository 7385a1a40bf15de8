"""Tabular softmax n-gram policy: the smallest differentiable autoregressive
model that can drive the full generate/grade/reward/update loop.

Parameters are a dense (buckets x vocab) logit table. The conditioning
context is the previous `context_length` tokens hashed together with the
problem id (feature hashing, crc32, deterministic across runs), so every
problem trains its own table slices and gradients stay analytically
checkable against finite differences.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .model import CandidateProgram, Problem, Span

EOS = "<eof>"
BOS = "<bos>"

# Concatenating sampled tokens directly yields the program text, so the
# vocabulary carries its own spacing: newline and space are tokens.
DEFAULT_VOCAB: tuple[str, ...] = (
    "print", "input", "int", "str", "len", "max", "min", "sum", "map",
    "sorted", "split", "upper", "join", "abs",
    "a", "b", "c", "n", "s", "x",
    "(", ")", "[", "]", ".", ",", ":", "=",
    "+", "-", "*", "/", "%",
    "0", "1", "2", "3", "6", "9",
    " ", "\n", '"',
    EOS,
)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


@dataclass
class ToyPolicy:
    vocab: tuple[str, ...] = DEFAULT_VOCAB
    context_length: int = 3
    num_buckets: int = 4096
    temperature: float = 1.0
    params: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.params is None:
            self.params = np.zeros((self.num_buckets, len(self.vocab)))
        self._index = {token: i for i, token in enumerate(self.vocab)}
        self._eos = self._index[EOS]

    @classmethod
    def random_init(
        cls, seed: int, scale: float = 1.0, **kwargs
    ) -> "ToyPolicy":
        policy = cls(**kwargs)
        rng = np.random.default_rng(seed)
        policy.params = rng.normal(0.0, scale, size=policy.params.shape)
        return policy

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(
            vocab=self.vocab,
            context_length=self.context_length,
            num_buckets=self.num_buckets,
            temperature=self.temperature,
            params=self.params.copy(),
        )

    # -- context hashing ------------------------------------------------

    def bucket(self, problem_id: str, context: tuple[str, ...]) -> int:
        key = problem_id + "\x1e" + "\x1f".join(context)
        return zlib.crc32(key.encode("utf-8")) % self.num_buckets

    def _context_iter(self, problem_id: str, tokens: tuple[str, ...]):
        context = (BOS,) * self.context_length
        for token in tokens:
            yield self.bucket(problem_id, context), token
            context = context[1:] + (token,)

    def buckets_for(self, problem_id: str, tokens: tuple[str, ...]) -> list[int]:
        return [b for b, _ in self._context_iter(problem_id, tokens)]

    # -- probabilities ----------------------------------------------------

    def log_probs(self, bucket: int) -> np.ndarray:
        return _log_softmax(self.params[bucket])

    def sequence_logprobs(
        self, problem_id: str, tokens: tuple[str, ...]
    ) -> tuple[float, ...]:
        """log p(token_t | prefix) at temperature 1 under current params."""
        out = []
        for bucket, token in self._context_iter(problem_id, tokens):
            out.append(float(self.log_probs(bucket)[self._index[token]]))
        return tuple(out)

    # -- generation -------------------------------------------------------

    def generate(
        self,
        problem: Problem,
        max_tokens: int | None = None,
        temperature: float | None = None,
        rng_seed: int = 0,
    ) -> CandidateProgram:
        """Sample one candidate autoregressively.

        Sampling uses `temperature` (0 means argmax); recorded logprobs are
        always the temperature-1 training probabilities. The truncated flag
        is set when the token cap fires before the end marker.
        """
        cap = max_tokens if max_tokens is not None else problem.max_tokens
        tau = self.temperature if temperature is None else temperature
        if tau < 0:
            raise ValueError("temperature must be >= 0")
        rng = np.random.default_rng(rng_seed)

        context = (BOS,) * self.context_length
        tokens: list[str] = []
        logprobs: list[float] = []
        truncated = True
        for _ in range(cap):
            bucket = self.bucket(problem.id, context)
            logits = self.params[bucket]
            if tau == 0.0:
                choice = int(np.argmax(logits))
            else:
                choice = int(rng.choice(len(self.vocab), p=_softmax(logits / tau)))
            token = self.vocab[choice]
            tokens.append(token)
            logprobs.append(float(_log_softmax(logits)[choice]))
            context = context[1:] + (token,)
            if choice == self._eos:
                truncated = False
                break

        source_tokens = [t for t in tokens if t != EOS]
        source = "".join(source_tokens)
        spans: list[Span] = []
        cursor = 0
        for token in tokens:
            if token == EOS:
                spans.append((cursor, cursor))
            else:
                spans.append((cursor, cursor + len(token)))
                cursor += len(token)
        return CandidateProgram(
            source=source,
            tokens=tuple(tokens),
            token_char_spans=tuple(spans),
            logprobs=tuple(logprobs),
            truncated=truncated,
        )

    def tokens_of_source(self, source: str) -> tuple[str, ...] | None:
        """Greedy re-tokenization of a source into vocab tokens + EOS.

        Returns None when the source is not expressible in the vocabulary;
        used to build supervised targets from ground-truth programs.
        """
        by_length = sorted(
            (t for t in self.vocab if t != EOS), key=len, reverse=True
        )
        tokens: list[str] = []
        i = 0
        while i < len(source):
            for token in by_length:
                if source.startswith(token, i):
                    tokens.append(token)
                    i += len(token)
                    break
            else:
                return None
        tokens.append(EOS)
        return tuple(tokens)
