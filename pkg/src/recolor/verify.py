"""Randomized self-checks: reward-count oracle, gradients, telescoping.

These are the deep consistency checks behind the `check` CLI subcommand.
Each check returns a JSON-friendly dict with a boolean ``passed`` plus the
numbers that justify it, so failures are diagnosable from the report alone.
"""

from __future__ import annotations

import time

import numpy as np

from .coloring import ColorState, apply_action
from .edges import (
    brute_force_edges,
    build_merge_system,
    build_split_system,
    counts_from_edge_list,
)
from .env import EnvConfig, reset
from .net import ConvSpec, Net, NetSpec
from .policy import (
    compute_returns,
    losses_and_gradients,
    policy_objective,
    new_policy,
    rollout,
)


def random_label_map(rng: np.random.Generator, height: int, width: int,
                     n_segments: int, bg_fraction: float = 0.35) -> np.ndarray:
    """Nearest-seed Manhattan segments with a random background sprinkle."""
    ys, xs = np.mgrid[0:height, 0:width]
    sy = rng.integers(0, height, n_segments)
    sx = rng.integers(0, width, n_segments)
    dist = np.abs(ys[..., None] - sy) + np.abs(xs[..., None] - sx)
    labels = dist.argmin(axis=2).astype(np.uint16) + 1
    labels[rng.random((height, width)) < bg_fraction] = 0
    return labels


def check_reward_oracle(cases: int = 200, seed: int = 0,
                        max_size: int = 16) -> dict:
    """Histogram-counted neighbor statistics vs. explicit edge enumeration.

    Every case draws a random label map, radius, shrinking factor, and
    coloring, and demands exact integer agreement for all four per-pixel
    counts on every pixel.
    """
    rng = np.random.default_rng(seed)
    started = time.monotonic()
    mismatches = 0
    for _ in range(cases):
        h = int(rng.integers(4, max_size + 1))
        w = int(rng.integers(4, max_size + 1))
        gt = random_label_map(rng, h, w, int(rng.integers(1, 7)),
                              bg_fraction=float(rng.uniform(0.1, 0.5)))
        radius = int(rng.integers(1, 7))
        alpha = float(rng.choice([0.5, 0.8, 1.0]))
        min_size = int(rng.choice([1, 2, 4, 8]))
        colors = rng.integers(0, 8, (h, w)).astype(np.uint32)

        split_sys = build_split_system(gt, radius)
        merge_sys = build_merge_system(gt, alpha, min_size)
        split_edges, merge_edges = brute_force_edges(gt, radius, alpha, min_size)

        n_split, n_merged = split_sys.count_split_merged(colors)
        want_split, want_merged = counts_from_edge_list(split_edges, colors)
        if not (np.array_equal(n_split, want_split)
                and np.array_equal(n_merged, want_merged)):
            mismatches += 1
            continue
        m_merged, m_split = merge_sys.count_merged_split(colors)
        want_mspl, want_mmrg = counts_from_edge_list(merge_edges, colors)
        if not (np.array_equal(m_merged, want_mmrg)
                and np.array_equal(m_split, want_mspl)):
            mismatches += 1
    return {
        "name": "reward-oracle",
        "cases": cases,
        "mismatches": mismatches,
        "elapsed_s": round(time.monotonic() - started, 3),
        "passed": mismatches == 0,
    }


def _tiny_convs(rng: np.random.Generator) -> tuple[ConvSpec, ...]:
    convs = []
    for _ in range(int(rng.integers(1, 4))):
        convs.append(ConvSpec(kernel=int(rng.choice([1, 3])),
                              channels=int(rng.integers(3, 7)),
                              dilation=int(rng.choice([1, 2]))))
    convs.append(ConvSpec(3, int(rng.integers(3, 7)), 1))
    return tuple(convs)


def check_gradients(nets: int = 5, samples: int = 200, h: float = 1e-5,
                    tolerance: float = 1e-4, required_fraction: float = 0.95,
                    seed: int = 0) -> dict:
    """Central finite differences against the analytic gradient.

    The objective holds the advantage fixed at its base-parameter value,
    matching what the analytic gradient actually differentiates.
    """
    rng = np.random.default_rng(seed)
    started = time.monotonic()
    results = []
    for net_idx in range(nets):
        env_cfg = EnvConfig(steps=int(rng.integers(2, 4)), radii=(2, 3),
                            alphas=((0.8, 3),), seed=int(rng.integers(1 << 30)))
        hgt, wid = int(rng.integers(6, 9)), int(rng.integers(6, 9))
        gt = random_label_map(rng, hgt, wid, int(rng.integers(1, 4)))
        image = rng.random((hgt, wid, 1))
        spec = NetSpec(in_channels=1 + env_cfg.steps, convs=_tiny_convs(rng))
        net = Net(spec)
        if net.n_params > 5000:
            raise AssertionError("tiny net budget exceeded; spec sampler bug")
        policy = new_policy(spec, int(rng.integers(1 << 30)))
        # random nonzero weights everywhere, heads included
        policy.vector = rng.normal(0.0, 0.3, net.n_params)
        ep, _ = reset(image, gt, env_cfg)
        traj = rollout(policy, ep, rng, mode="sample")
        beta = float(rng.choice([0.0, 0.01]))

        # the advantage is frozen at its base-parameter value
        _, values = net.forward(policy.vector, np.stack(traj.observations))
        advantages = compute_returns(traj, env_cfg.gamma).returns - values
        _, grad = losses_and_gradients(policy.vector, spec, traj,
                                       env_cfg.gamma, beta)

        coords = rng.choice(net.n_params, min(samples, net.n_params),
                            replace=False)
        ok = 0
        worst = 0.0
        for i in coords:
            plus = policy.vector.copy()
            plus[i] += h
            minus = policy.vector.copy()
            minus[i] -= h
            fd = (policy_objective(plus, spec, traj, env_cfg.gamma, beta,
                                   advantages)
                  - policy_objective(minus, spec, traj, env_cfg.gamma, beta,
                                     advantages)) / (2 * h)
            denom = max(abs(fd), abs(grad[i]))
            if denom < 1e-12:
                ok += 1
                continue
            rel = abs(fd - grad[i]) / denom
            worst = max(worst, rel)
            if rel < tolerance:
                ok += 1
        results.append({
            "net": net_idx,
            "params": net.n_params,
            "checked": len(coords),
            "within_tolerance": ok,
            "fraction": ok / len(coords),
            "worst_rel_error": worst,
        })
    passed = all(r["fraction"] >= required_fraction for r in results)
    return {
        "name": "grad",
        "nets": results,
        "tolerance": tolerance,
        "required_fraction": required_fraction,
        "elapsed_s": round(time.monotonic() - started, 3),
        "passed": passed,
    }


def check_telescoping(episodes: int = 50, seed: int = 0,
                      tolerance: float = 1e-10) -> dict:
    """Interior splitting gains cancel: the per-episode sum is an endpoint difference."""
    from .reward import reward_split_parts

    rng = np.random.default_rng(seed)
    started = time.monotonic()
    worst = 0.0
    steps = 5
    for _ in range(episodes):
        hgt, wid = int(rng.integers(6, 14)), int(rng.integers(6, 14))
        gt = random_label_map(rng, hgt, wid, int(rng.integers(1, 6)))
        sys = build_split_system(gt, int(rng.integers(1, 6)))
        state = ColorState.initial(hgt, wid, steps)
        states = [state]
        for _ in range(steps):
            state = apply_action(state, rng.integers(0, 2, (hgt, wid)))
            states.append(state)
        acc = np.zeros((hgt, wid))
        for t in range(1, steps):
            gain, _ = reward_split_parts(states[t], states[t + 1], sys, steps)
            acc += gain
        first, _ = sys.count_split_merged(states[1].colors)
        last, _ = sys.count_split_merged(states[-1].colors)
        want = np.zeros((hgt, wid))
        np.divide(last - first, sys.degree, out=want, where=sys.degree > 0)
        worst = max(worst, float(np.abs(acc - want).max()))
    return {
        "name": "telescoping",
        "episodes": episodes,
        "max_deviation": worst,
        "tolerance": tolerance,
        "elapsed_s": round(time.monotonic() - started, 3),
        "passed": worst <= tolerance,
    }


def run_all_checks(seed: int = 0, cases: int = 200) -> dict:
    checks = [
        check_reward_oracle(cases=cases, seed=seed),
        check_gradients(seed=seed),
        check_telescoping(seed=seed),
    ]
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}
