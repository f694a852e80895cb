"""Sequence spaces, bigram objectives and the appending MDP.

Candidates are tuples of vocabulary indices, so Python tuple ordering is the
lexicographic order used for enumeration and tie-breaking.
"""

from dataclasses import dataclass, field

import numpy as np

AMINO_ACIDS = "ARNDCQEGHILKMPFSTWYV"
ENUMERATION_CAP = 10**7

#: Pad symbol for Hamming distance and padded arrays; never a valid token.
PAD = -1


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


class EnumerationCapError(RuntimeError):
    """Raised when enumerating a space would exceed the configured cap."""

    def __init__(self, size, cap):
        super().__init__(f"space has {size} candidates, above the enumeration cap of {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class SequenceSpace:
    vocab: str
    min_len: int
    max_len: int

    def __post_init__(self):
        if len(self.vocab) < 2 or len(set(self.vocab)) != len(self.vocab):
            raise ContractError("vocabulary needs at least two distinct tokens")
        if not 1 <= self.min_len <= self.max_len:
            raise ContractError(f"invalid length bounds [{self.min_len}, {self.max_len}]")

    @property
    def n_tokens(self):
        return len(self.vocab)

    @property
    def terminate_action(self):
        return len(self.vocab)

    @property
    def n_actions(self):
        return len(self.vocab) + 1

    def size(self):
        v = self.n_tokens
        return sum(v**L for L in range(self.min_len, self.max_len + 1))

    def encode(self, text):
        try:
            return tuple(self.vocab.index(ch) for ch in text)
        except ValueError:
            raise ContractError(f"{text!r} has tokens outside vocabulary {self.vocab!r}") from None

    def decode(self, x):
        return "".join(self.vocab[i] for i in x)

    def is_valid(self, x):
        return (self.min_len <= len(x) <= self.max_len
                and all(0 <= t < self.n_tokens for t in x))

    def sample_uniform(self, rng, size):
        """Draw ``size`` candidates uniformly from the whole space."""
        lengths = np.arange(self.min_len, self.max_len + 1)
        weights = np.array([float(self.n_tokens) ** L for L in lengths])
        ls = rng.choice(lengths, size=size, p=weights / weights.sum())
        return [tuple(int(t) for t in rng.integers(0, self.n_tokens, size=L)) for L in ls]


def enumerate_space(space, cap=ENUMERATION_CAP):
    """Yield every terminal candidate once, in lexicographic order."""
    size = space.size()
    if size > cap:
        raise EnumerationCapError(size, cap)
    return _lex_walk(space, ())


def _lex_walk(space, prefix):
    if len(prefix) >= space.min_len:
        yield prefix
    if len(prefix) < space.max_len:
        for t in range(space.n_tokens):
            yield from _lex_walk(space, prefix + (t,))


def enumerate_array(space, cap=ENUMERATION_CAP):
    """All candidates as a list and as a ``PAD``-filled int array."""
    cands = list(enumerate_space(space, cap))
    return cands, pad_candidates(cands, space.max_len)


def pad_candidates(cands, width):
    arr = np.full((len(cands), width), PAD, dtype=np.int64)
    for i, x in enumerate(cands):
        arr[i, :len(x)] = x
    return arr


def hamming(a, b):
    """Positional mismatches, the shorter sequence right-padded with ``PAD``."""
    n = max(len(a), len(b))
    a = tuple(a) + (PAD,) * (n - len(a))
    b = tuple(b) + (PAD,) * (n - len(b))
    return sum(1 for u, v in zip(a, b) if u != v)


def hamming_matrix(xs, ys, width):
    """Pairwise Hamming distances between two candidate lists."""
    xa = pad_candidates(xs, width)
    ya = pad_candidates(ys, width)
    if not len(xs) or not len(ys):
        return np.zeros((len(xs), len(ys)), dtype=np.int64)
    return (xa[:, None, :] != ya[None, :, :]).sum(axis=2)


@dataclass(frozen=True)
class BigramTask:
    space: SequenceSpace
    targets: tuple

    def __post_init__(self):
        targets = tuple(self.targets)
        object.__setattr__(self, "targets", targets)
        if not targets:
            raise ContractError("a bigram task needs at least one target")
        if len(set(targets)) != len(targets):
            raise ContractError("target bigrams must be distinct")
        for t in targets:
            if len(t) != 2 or any(ch not in self.space.vocab for ch in t):
                raise ContractError(f"target {t!r} is not a bigram over {self.space.vocab!r}")

    @property
    def n_objectives(self):
        return len(self.targets)

    @property
    def denominator(self):
        return self.space.max_len // 2

    def _target_ids(self):
        return [(self.space.vocab.index(t[0]), self.space.vocab.index(t[1])) for t in self.targets]

    def __call__(self, x):
        return bigram_objective(self, x)

    def evaluate_many(self, xs):
        """Objective vectors for a list of candidates, shape ``(len(xs), m)``."""
        if not len(xs):
            return np.zeros((0, self.n_objectives))
        arr = pad_candidates(xs, self.space.max_len)
        left, right = arr[:, :-1], arr[:, 1:]
        out = np.empty((len(xs), self.n_objectives))
        for i, (a, b) in enumerate(self._target_ids()):
            out[:, i] = ((left == a) & (right == b)).sum(axis=1)
        return out / self.denominator


def bigram_objective(task, x):
    """Per-target sliding-window occurrence counts, scaled into [0, 1]."""
    if not task.space.is_valid(x):
        raise ContractError(f"candidate of length {len(x)} is not a valid terminal sequence")
    counts = []
    for a, b in task._target_ids():
        counts.append(sum(1 for j in range(len(x) - 1) if x[j] == a and x[j + 1] == b))
    return np.asarray(counts, dtype=np.float64) / task.denominator


def make_bigram_task(vocab, min_len, max_len, targets):
    return BigramTask(SequenceSpace(vocab, min_len, max_len), tuple(targets))


PAPER_BIGRAM_TARGETS = {
    2: ("AV", "VC"),
    3: ("AV", "VC", "CA"),
    4: ("AV", "VC", "CA", "AW"),
}


def paper_bigram_task(n_targets):
    """Bigram benchmark at its published scale (amino-acid vocabulary, length 32-36)."""
    return make_bigram_task(AMINO_ACIDS, 32, 36, PAPER_BIGRAM_TARGETS[n_targets])


def tiny_bigram_task(min_len=6, max_len=8):
    """Desk-scale two-target task over a four-letter vocabulary."""
    return make_bigram_task("AVCW", min_len, max_len, ("AV", "VC"))


# -- appending MDP ---------------------------------------------------------

@dataclass(frozen=True)
class MdpState:
    prefix: tuple = ()
    terminal: bool = False


@dataclass(frozen=True)
class AppendingMdp:
    space: SequenceSpace
    initial: MdpState = field(default_factory=MdpState)

    def legal_mask(self, state):
        """Boolean mask over ``n_tokens + 1`` actions (last is terminate)."""
        if state.terminal:
            raise ContractError("terminal states have no legal actions")
        return legal_mask(self.space, len(state.prefix))

    def step(self, state, action):
        return mdp_step(self.space, state, action)


def legal_mask(space, length):
    mask = np.zeros(space.n_actions, dtype=bool)
    mask[:space.n_tokens] = length < space.max_len
    mask[space.terminate_action] = length >= space.min_len
    return mask


def mdp_step(space, state, action):
    """Append a token or terminate; reaching ``max_len`` terminates."""
    if state.terminal:
        raise ContractError("cannot step a terminal state")
    n = len(state.prefix)
    if n >= space.max_len:
        return MdpState(state.prefix, True)
    if action == space.terminate_action:
        if n < space.min_len:
            raise ContractError(f"terminate is masked below min_len={space.min_len}")
        return MdpState(state.prefix, True)
    if not 0 <= action < space.n_tokens:
        raise ContractError(f"action {action} is outside the action space")
    prefix = state.prefix + (int(action),)
    return MdpState(prefix, len(prefix) >= space.max_len)

