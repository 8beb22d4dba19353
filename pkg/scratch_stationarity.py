"""Scratch: exact stationary distribution of the baseline kernel on 4 mentions.

Enumerates the 15 partitions, builds the exact transition matrix for the
entity-first kernel (e_i uniform over k, e_j uniform over k existing + fresh,
m uniform in e_i), with and without the Hastings T-ratio factor, and compares
the stationary vector to exact pi ~ exp(score).
"""
import itertools
import math
import numpy as np


def partitions(collection):
    if len(collection) == 1:
        yield [collection]
        return
    first = collection[0]
    for smaller in partitions(collection[1:]):
        for i, subset in enumerate(smaller):
            yield smaller[:i] + [[first] + subset] + smaller[i + 1:]
        yield [[first]] + smaller


# simple pair score model: AABB surfaces, equal->+1.2, unequal->-0.8
def pair(a, b):
    same = (a < 2) == (b < 2)
    return 1.2 if same else -0.8


def score(part):
    s = 0.0
    for grp in part:
        for x, y in itertools.combinations(sorted(grp), 2):
            s += pair(x, y)
    return s


def key(part):
    return tuple(sorted(tuple(sorted(g)) for g in part))


parts = [key(p) for p in partitions(list(range(4)))]
parts = sorted(set(parts))
idx = {p: i for i, p in enumerate(parts)}
print(len(parts), "partitions")

pi = np.array([math.exp(score(p)) for p in parts])
pi /= pi.sum()


def neighbors(part):
    """All (move-result, T_fwd contribution, hastings log ratio) triples."""
    part = [list(g) for g in part]
    k = len(part)
    out = {}
    for ei in range(k):
        for m in part[ei]:
            for ej in list(range(k)) + ["fresh"]:
                if ej != "fresh" and ej == ei:
                    continue  # no-op self move
                if ej == "fresh" and len(part[ei]) == 1:
                    continue  # structural no-op
                new = [list(g) for g in part]
                new[ei] = [x for x in new[ei] if x != m]
                if ej == "fresh":
                    new.append([m])
                    tgt_after = 1
                else:
                    new[ej] = new[ej] + [m]
                    tgt_after = len(new[ej])
                new = [g for g in new if g]
                kp = len(new)
                p_fwd = (1.0 / k) * (1.0 / (k + 1)) * (1.0 / len(part[ei]))
                # hastings: T_rev/T_fwd with multiplicities cancelling
                log_r = math.log(k * (k + 1) * len(part[ei])) - math.log(
                    kp * (kp + 1) * tgt_after
                )
                kk = key(new)
                if kk not in out:
                    out[kk] = [0.0, log_r]
                out[kk][0] += p_fwd
                # log_r identical for all (m, target) pairs reaching same partition
    return out


def chain(corrected, mode="metropolis"):
    T = np.zeros((15, 15))
    for i, p in enumerate(parts):
        si = score(p)
        for kk, (p_fwd, log_r) in neighbors(p).items():
            j = idx[kk]
            delta = score(kk) - si
            x = delta + (log_r if corrected else 0.0)
            a = min(1.0, math.exp(x))
            T[i, j] += p_fwd * a
        T[i, i] += 1.0 - T[i].sum()
    evals, evecs = np.linalg.eig(T.T)
    station = None
    for v, vec in zip(evals, evecs.T):
        if abs(v - 1) < 1e-9:
            station = np.real(vec)
            station = station / station.sum()
            break
    return station


for corrected in (False, True):
    st = chain(corrected)
    tv = 0.5 * np.abs(st - pi).sum()
    print(f"corrected={corrected}: TV(stationary, pi) = {tv:.5f}")
