"""Independent reference implementations used as test oracles.

Nothing here touches packed words: templates are handled as unpacked boolean
arrays and rotations use explicit index arithmetic.
"""

import numpy as np


def naive_hd_counts(code_a, mask_a, code_b, mask_b):
    both = mask_a & mask_b
    return int(np.count_nonzero((code_a != code_b) & both)), int(np.count_nonzero(both))


def loop_hd_counts(code_a, mask_a, code_b, mask_b):
    """Literal per-bit loop; only for small arrays."""
    num = den = 0
    for ca, ma, cb, mb in zip(code_a.ravel().tolist(), mask_a.ravel().tolist(),
                              code_b.ravel().tolist(), mask_b.ravel().tolist()):
        if ma and mb:
            den += 1
            if ca != cb:
                num += 1
    return num, den


def rotate(bits, s):
    """Column c of the result is column (c - s) mod cols of the input."""
    cols = bits.shape[-1]
    src = [(c - s) % cols for c in range(cols)]
    return bits[..., src]


def shift_order(max_shift):
    order = [0]
    for s in range(1, max_shift + 1):
        order += [-s, s]
    return order


def naive_match(code_a, mask_a, code_b, mask_b, max_shift, keep=None):
    """(hd, best_shift, compared_bits, disagreeing_bits) or None when unscorable."""
    if keep is not None:
        mask_a = mask_a & keep
        mask_b = mask_b & keep
    best = None
    for s in shift_order(max_shift):
        num, den = naive_hd_counts(code_a, mask_a, rotate(code_b, s), rotate(mask_b, s))
        if den == 0:
            continue
        hd = num / den
        if best is None or hd < best[0]:
            best = (hd, s, den, num)
    return best


def naive_keep(cols, retained):
    keep = np.zeros(cols, dtype=bool)
    for c in retained:
        keep[c] = True
    return keep


# --- capacity ----------------------------------------------------------------

def brute_fa_counts(M, pairs, scores, t):
    counts = [0] * M
    for (a, b), s in zip(pairs, scores):
        if s <= t:
            counts[a] += 1
            counts[b] += 1
    return counts


def brute_capacity(M, pairs, scores, t, names):
    """Add identities one at a time in ascending-FA order.

    Returns (cc, curve): cc counts identities admitted before the first one
    carrying any false accept; curve[k] recounts, from scratch, the accepting
    pairs whose members are both among the first k identities.
    """
    counts = brute_fa_counts(M, pairs, scores, t)
    order = sorted(range(M), key=lambda i: (counts[i], names[i]))
    cc = 0
    for i in order:
        clashes = sum(1 for (a, b), s in zip(pairs, scores) if s <= t and i in (a, b))
        if clashes:
            break
        cc += 1
    curve = []
    for k in range(M + 1):
        enrolled = set(order[:k])
        curve.append(sum(1 for (a, b), s in zip(pairs, scores)
                         if s <= t and a in enrolled and b in enrolled))
    return cc, curve


def brute_threshold(scores, target_far):
    """Largest candidate in {0} U scores with fraction(scores <= t) <= target."""
    n = len(scores)
    best = None
    for t in sorted(set([0.0] + list(scores))):
        admitted = sum(1 for s in scores if s <= t)
        if admitted * 100 <= target_far * n * (1 + 1e-12):
            best = (t, admitted / n)
    return best
