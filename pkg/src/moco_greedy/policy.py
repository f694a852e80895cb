"""Conditioned autoregressive policies over the appending MDP.

The network is ``Dec(Enc_cond(c) ++ Enc_state(s))`` where the conditioning
encoder is either a deep set over per-candidate features (set-conditioned
policy) or an MLP over a preference weight vector (preference-conditioned
baseline). Everything is float64 so that analytic gradients can be checked
against finite differences.

Action ``n_tokens`` is "terminate". Sampling uses a numpy ``Generator`` so a
seed fully determines the rollouts; torch is only used for the forward pass
and reverse-mode gradients.
"""

import copy
import json
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from moco_greedy.tasks import PAD, ContractError, SequenceSpace, legal_mask

DTYPE = torch.float64
CHECKPOINT_VERSION = 1
CONDITIONS = ("set", "pref")


def _uniform_(t, scale, gen):
    with torch.no_grad():
        t.copy_((torch.rand(t.shape, generator=gen, dtype=DTYPE) * 2 - 1) * scale)
    return t


class ConditionedPolicyNet(nn.Module):
    """Token/position state encoder, set or preference encoder, MLP decoder."""

    def __init__(self, n_tokens, max_len, n_objectives, hidden=64, condition="set"):
        super().__init__()
        if condition not in CONDITIONS:
            raise ContractError(f"unknown condition kind {condition!r}")
        h = hidden
        self.condition_kind = condition
        self.tok = nn.Parameter(torch.zeros(n_tokens, h, dtype=DTYPE))
        self.pos = nn.Parameter(torch.zeros(max_len, h, dtype=DTYPE))
        self.len_emb = nn.Parameter(torch.zeros(max_len + 1, h, dtype=DTYPE))
        self.state1 = nn.Linear(h, h, dtype=DTYPE)
        self.state2 = nn.Linear(h, h, dtype=DTYPE)
        if condition == "set":
            # equivariant max-pooling layers: tanh(Gamma x - Lambda max(x))
            self.gamma = nn.ModuleList([nn.Linear(n_objectives, h, dtype=DTYPE),
                                        nn.Linear(h, h, dtype=DTYPE),
                                        nn.Linear(h, h, dtype=DTYPE)])
            self.lam = nn.ModuleList([nn.Linear(n_objectives, h, bias=False, dtype=DTYPE),
                                      nn.Linear(h, h, bias=False, dtype=DTYPE),
                                      nn.Linear(h, h, bias=False, dtype=DTYPE)])
            self.head1 = nn.Linear(h, h, dtype=DTYPE)
            self.head2 = nn.Linear(h, h, dtype=DTYPE)
        else:
            self.pref1 = nn.Linear(n_objectives, h, dtype=DTYPE)
            self.pref2 = nn.Linear(h, h, dtype=DTYPE)
        self.dec1 = nn.Linear(2 * h + 1, h, dtype=DTYPE)
        self.dec2 = nn.Linear(h, n_tokens + 1, dtype=DTYPE)

    def encode_condition(self, cond):
        """Conditioning vector of size ``hidden + 1``; last channel flags an empty set."""
        if self.condition_kind == "pref":
            w = torch.as_tensor(cond, dtype=DTYPE)
            e = self.pref2(torch.tanh(self.pref1(w)))
            return torch.cat([e, torch.zeros(1, dtype=DTYPE)])
        feats = np.asarray(cond, dtype=np.float64)
        if feats.size == 0:
            return torch.cat([torch.zeros(self.head2.out_features, dtype=DTYPE),
                              torch.ones(1, dtype=DTYPE)])
        feats = feats.reshape(len(feats), -1)
        # max pooling ignores multiplicity, so unique sorted rows give an
        # encoding that is bitwise invariant to order and duplicates
        feats = np.unique(feats, axis=0)
        x = torch.as_tensor(feats, dtype=DTYPE)
        for g, l in zip(self.gamma, self.lam):
            x = torch.tanh(g(x) - l(x.max(dim=0, keepdim=True).values))
        pooled = x.max(dim=0).values
        e = self.head2(torch.tanh(self.head1(pooled)))
        return torch.cat([e, torch.zeros(1, dtype=DTYPE)])

    def encode_states(self, prefix_sum, lengths):
        """State features from summed token+position embeddings and prefix lengths."""
        denom = lengths.clamp(min=1).to(DTYPE).unsqueeze(-1)
        h = prefix_sum / denom + self.len_emb[lengths]
        return torch.tanh(self.state2(torch.tanh(self.state1(h))))

    def logits(self, state_h, cond_vec):
        c = cond_vec.expand(*state_h.shape[:-1], cond_vec.shape[-1])
        return self.dec2(torch.tanh(self.dec1(torch.cat([c, state_h], dim=-1))))

    def token_embeddings(self, tokens, positions):
        return self.tok[tokens] + self.pos[positions]


@dataclass
class Trajectory:
    """A completed rollout: the candidate, its actions and log-probability."""

    candidate: tuple
    actions: tuple
    log_prob: float

    @property
    def states(self):
        return [self.candidate[:t] for t in range(len(self.actions))]


class Policy:
    """Parameter store plus sampling and gradient routines for one network."""

    def __init__(self, space, n_objectives, hidden=64, condition="set", seed=0, init_scale=1e-2):
        self.space = space
        self.n_objectives = n_objectives
        self.hidden = hidden
        self.condition = condition
        self.net = ConditionedPolicyNet(space.n_tokens, space.max_len, n_objectives, hidden, condition)
        gen = torch.Generator().manual_seed(int(seed))
        for name, p in self.net.named_parameters():
            if name.startswith("dec2."):
                nn.init.zeros_(p)
            else:
                _uniform_(p, init_scale, gen)

    # -- parameters ------------------------------------------------------
    @property
    def n_params(self):
        return sum(p.numel() for p in self.net.parameters())

    def flat(self):
        return nn.utils.parameters_to_vector(self.net.parameters()).detach().numpy().copy()

    def set_flat(self, vec):
        vec = torch.as_tensor(np.asarray(vec, dtype=np.float64))
        if vec.numel() != self.n_params:
            raise ContractError(f"expected {self.n_params} parameters, got {vec.numel()}")
        nn.utils.vector_to_parameters(vec, self.net.parameters())

    def snapshot(self):
        """Independent deep copy, used as the frozen behavior policy."""
        return copy.deepcopy(self)

    def shapes(self):
        return {name: list(p.shape) for name, p in self.net.named_parameters()}

    def save(self, path):
        meta = {"version": CHECKPOINT_VERSION, "kind": "policy", "condition": self.condition,
                "vocab": self.space.vocab, "min_len": self.space.min_len,
                "max_len": self.space.max_len, "n_objectives": self.n_objectives,
                "hidden": self.hidden, "shapes": self.shapes()}
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 params=self.flat())

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            params = data["params"]
        if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "policy":
            raise ValueError(f"unsupported policy checkpoint {meta.get('kind')} v{meta.get('version')}")
        space = SequenceSpace(meta["vocab"], meta["min_len"], meta["max_len"])
        pol = cls(space, meta["n_objectives"], meta["hidden"], meta["condition"])
        if pol.shapes() != meta["shapes"]:
            raise ValueError("checkpoint parameter shapes do not match the architecture")
        pol.set_flat(params)
        return pol

    # -- distributions ---------------------------------------------------
    def encode(self, cond):
        return self.net.encode_condition(cond)

    def action_distribution(self, prefix, cond, p_rand=0.0):
        """Probabilities over all actions at a non-terminal state (masked ones are 0)."""
        prefix = tuple(prefix)
        n = len(prefix)
        if n > self.space.max_len:
            raise ContractError("prefix longer than max_len")
        mask = legal_mask(self.space, n)
        with torch.no_grad():
            c = self.encode(cond)
            s = torch.zeros(self.hidden, dtype=DTYPE)
            if n:
                s = self.net.token_embeddings(torch.tensor(prefix), torch.arange(n)).sum(dim=0)
            h = self.net.encode_states(s.unsqueeze(0), torch.tensor([n]))
            logits = self.net.logits(h, c)[0].numpy()
        return _masked_probs(logits[None, :], mask[None, :], p_rand)[0]

    def sample(self, cond, n, rng, p_rand=0.0, cond_vec=None):
        """Draw ``n`` independent trajectories; returns a list of :class:`Trajectory`."""
        space = self.space
        V, L = space.n_tokens, space.max_len
        tokens = np.full((n, L), PAD, dtype=np.int64)
        logp = np.zeros(n)
        actions = [[] for _ in range(n)]
        active = np.arange(n)
        lengths = np.zeros(n, dtype=np.int64)
        with torch.no_grad():
            c = self.encode(cond) if cond_vec is None else cond_vec
            run = torch.zeros(n, self.hidden, dtype=DTYPE)
            t = 0
            while active.size:
                h = self.net.encode_states(run[active], torch.full((active.size,), t))
                logits = self.net.logits(h, c).numpy()
                mask = np.broadcast_to(legal_mask(space, t), logits.shape)
                net_p = _masked_probs(logits, mask, 0.0)
                mix_p = _masked_probs(logits, mask, p_rand) if p_rand > 0 else net_p
                a = _categorical(mix_p, rng)
                logp[active] += np.log(net_p[np.arange(active.size), a])
                for i, ai in zip(active, a):
                    actions[i].append(int(ai))
                stop = a == V
                grow = active[~stop]
                if grow.size:
                    toks = a[~stop]
                    tokens[grow, t] = toks
                    lengths[grow] = t + 1
                    run[grow] += self.net.token_embeddings(torch.as_tensor(toks), torch.full((grow.size,), t))
                t += 1
                active = grow if t < L else grow[:0]
        return [Trajectory(tuple(int(v) for v in tokens[i, :lengths[i]]), tuple(actions[i]), float(logp[i]))
                for i in range(n)]

    def log_prob(self, candidates, cond_vec):
        """Differentiable log-probabilities of complete candidates, shape ``(N,)``."""
        space = self.space
        V, L = space.n_tokens, space.max_len
        n = len(candidates)
        tok = np.full((n, L), 0, dtype=np.int64)
        lens = np.zeros(n, dtype=np.int64)
        for i, x in enumerate(candidates):
            if not space.is_valid(x):
                raise ContractError(f"candidate {x} is not a valid terminal sequence for this policy")
            tok[i, :len(x)] = x
            lens[i] = len(x)
        steps = np.arange(L + 1)
        valid_tok = steps[None, :L] < lens[:, None]
        emb = self.net.token_embeddings(torch.as_tensor(tok), torch.arange(L))
        emb = emb * torch.as_tensor(valid_tok, dtype=DTYPE).unsqueeze(-1)
        csum = torch.cat([torch.zeros(n, 1, self.hidden, dtype=DTYPE), emb.cumsum(dim=1)], dim=1)
        length_idx = torch.as_tensor(np.broadcast_to(steps, (n, L + 1)).copy())
        h = self.net.encode_states(csum, length_idx)
        logits = self.net.logits(h, cond_vec)
        mask = np.stack([legal_mask(space, t) for t in steps])
        logits = logits.masked_fill(torch.as_tensor(~mask)[None, :, :], float("-inf"))
        logsm = torch.log_softmax(logits, dim=-1)
        # action at step t: token x_t while t < len, then terminate unless len == max_len
        act = np.where(steps[None, :] < lens[:, None], np.pad(tok, ((0, 0), (0, 1))), V)
        taken = (steps[None, :] < lens[:, None]) | ((steps[None, :] == lens[:, None]) & (lens[:, None] < L))
        act = np.where(taken, act, 0)
        picked = logsm.gather(-1, torch.as_tensor(act).unsqueeze(-1)).squeeze(-1)
        picked = torch.where(torch.as_tensor(taken), picked, torch.zeros((), dtype=DTYPE))
        return picked.sum(dim=1)

    def log_prob_and_grad(self, trajectory, cond):
        """Trajectory log-probability and its gradient as a flat vector."""
        cand = trajectory.candidate if isinstance(trajectory, Trajectory) else tuple(trajectory)
        self.net.zero_grad(set_to_none=True)
        lp = self.log_prob([cand], self.encode(cond))[0]
        grads = torch.autograd.grad(lp, list(self.net.parameters()), allow_unused=True)
        flat = torch.cat([(g if g is not None else torch.zeros_like(p)).reshape(-1)
                          for g, p in zip(grads, self.net.parameters())])
        return float(lp.item()), flat.numpy().copy()

    def weighted_grad(self, candidates, weights, cond):
        """Gradient of ``sum_j weights[j] * log pi(x_j | cond)`` as a flat vector."""
        lp = self.log_prob(candidates, self.encode(cond))
        obj = (torch.as_tensor(np.asarray(weights, dtype=np.float64)) * lp).sum()
        grads = torch.autograd.grad(obj, list(self.net.parameters()), allow_unused=True)
        return torch.cat([(g if g is not None else torch.zeros_like(p)).reshape(-1)
                          for g, p in zip(grads, self.net.parameters())]).numpy()


class TrainingError(RuntimeError):
    """Raised when an update produces non-finite values."""


def normalize_returns(r, eps=1e-8):
    """Zero-mean, unit-scale returns; identical returns map to all zeros."""
    r = np.asarray(r, dtype=np.float64)
    if r.size == 0 or np.ptp(r) == 0.0:
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + eps)


def reinforce_step(policy, candidates, returns, cond, lr, eps=1e-8, optimizer=None):
    """One ascent step on ``sum_j rhat_j log pi(x_j | cond)`` with normalized returns.

    Returns the normalized returns. With ``optimizer=None`` the step is plain
    gradient ascent with learning rate ``lr``.
    """
    rhat = normalize_returns(returns, eps)
    if not np.any(rhat):
        return rhat
    params = list(policy.net.parameters())
    lp = policy.log_prob(candidates, policy.encode(cond))
    obj = (torch.as_tensor(rhat) * lp).sum()
    if optimizer is not None:
        optimizer.zero_grad(set_to_none=True)
        (-obj).backward()
        optimizer.step()
    else:
        grads = torch.autograd.grad(obj, params, allow_unused=True)
        with torch.no_grad():
            for p, g in zip(params, grads):
                if g is not None:
                    p.add_(g, alpha=lr)
    if not all(torch.isfinite(p).all() for p in params):
        raise TrainingError(f"non-finite parameters after update (objective {obj.item():.4g})")
    return rhat


def _masked_probs(logits, mask, p_rand):
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    p = e / e.sum(axis=1, keepdims=True)
    if p_rand > 0:
        uni = mask / mask.sum(axis=1, keepdims=True)
        p = (1.0 - p_rand) * p + p_rand * uni
    return p


def _categorical(p, rng):
    u = rng.random(p.shape[0])
    c = np.cumsum(p, axis=1)
    idx = (c < u[:, None]).sum(axis=1)
    # guard the round-off tail: never land on a zero-probability action
    last_legal = p.shape[1] - 1 - np.argmax((p > 0)[:, ::-1], axis=1)
    return np.minimum(idx, last_legal)


def scalarize(pref, y, kind="weighted"):
    """Weighted-sum or Chebyshev (min_i w_i y_i) scalarization, maximization form."""
    w = np.asarray(pref, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ContractError("preference must lie on the simplex")
    if kind == "weighted":
        return y @ w
    if kind == "chebyshev":
        return np.min(w * y, axis=-1)
    raise ContractError(f"unknown scalarization {kind!r}")


def sample_preferences(m, n, rng):
    """``n`` preference vectors from a flat Dirichlet on the m-simplex."""
    return rng.dirichlet(np.ones(m), size=n)
