"""Hot loops: the deferred acceptance kernel and the exhaustive report enumerator.

Both functions take only int64 numpy arrays and scalars so they compile under
numba; with acceleration disabled they run unchanged as plain Python.

The kernel is side-agnostic.  "Proposers" make offers down their lists and
"proposees" hold their best ``proposee_cap`` offers.  Student-proposing DAA
passes students as proposers with capacity 1; college-proposing DAA passes
colleges as proposers with their quotas and students as proposees with
capacity 1.
"""
import numpy as np

from ._accel import njit

# column layout of the event tables returned by deferred_acceptance
PROP_ROUND, PROP_FROM, PROP_TO = 0, 1, 2
REJ_ROUND, REJ_BY, REJ_WHO, REJ_FAVOR, REJ_KIND = 0, 1, 2, 3, 4
DISPLACED = 1  # a held proposer was pushed out by a better newcomer
REFUSED = 2  # a newcomer was turned away by a full proposee


@njit
def deferred_acceptance(prop_prefs, proposee_rank, prop_cap, proposee_cap, order, record):
    """Synchronous-round deferred acceptance.

    Every round, each proposer (visited in ``order``) makes as many new
    proposals as it had rejections in the previous round (its full capacity
    in round 0), going down its list.  Proposees keep their best offers up to
    capacity.  Offers inside a round are inserted one by one, which yields the
    same held sets as filtering the whole batch at the end of the round.

    Returns ``(held, n_held, n_proposed, n_received, proposals, rejections)``:
    ``held[q, :n_held[q]]`` are the proposers proposee ``q`` ends with,
    ``n_proposed[p]`` is the length of the prefix of ``p``'s list it proposed
    to, ``n_received[q]`` counts offers received.  When ``record`` is set the
    event tables hold one row per proposal ``(round, proposer, proposee)`` and
    per rejection ``(round, proposee, rejected, in_favor_of, kind)``.
    """
    n_p, n_q = prop_prefs.shape
    max_cap = 1
    for q in range(n_q):
        if proposee_cap[q] > max_cap:
            max_cap = proposee_cap[q]
    held = np.full((n_q, max_cap), -1, dtype=np.int64)
    n_held = np.zeros(n_q, dtype=np.int64)
    worst_slot = np.zeros(n_q, dtype=np.int64)
    n_proposed = np.zeros(n_p, dtype=np.int64)
    n_received = np.zeros(n_q, dtype=np.int64)
    pending = prop_cap.copy()
    demand = np.zeros(n_p, dtype=np.int64)

    n_events = n_p * n_q if record else 1
    proposals = np.empty((n_events, 3), dtype=np.int64)
    rejections = np.empty((n_events, 5), dtype=np.int64)
    n_prop_ev = 0
    n_rej_ev = 0

    rnd = 0
    while True:
        for p in range(n_p):
            demand[p] = pending[p]
            pending[p] = 0
        active = False
        for k in range(n_p):
            p = order[k]
            d = demand[p]
            while d > 0 and n_proposed[p] < n_q:
                q = prop_prefs[p, n_proposed[p]]
                n_proposed[p] += 1
                d -= 1
                active = True
                n_received[q] += 1
                if record:
                    proposals[n_prop_ev, 0] = rnd
                    proposals[n_prop_ev, 1] = p
                    proposals[n_prop_ev, 2] = q
                    n_prop_ev += 1
                r = proposee_rank[q, p]
                h = n_held[q]
                if h < proposee_cap[q]:
                    held[q, h] = p
                    if h == 0 or r > proposee_rank[q, held[q, worst_slot[q]]]:
                        worst_slot[q] = h
                    n_held[q] = h + 1
                    continue
                w = held[q, worst_slot[q]]
                if r < proposee_rank[q, w]:
                    held[q, worst_slot[q]] = p
                    # re-scan for the new worst holder
                    best_slot = 0
                    best_rank = -1
                    for i in range(h):
                        rr = proposee_rank[q, held[q, i]]
                        if rr > best_rank:
                            best_rank = rr
                            best_slot = i
                    worst_slot[q] = best_slot
                    pending[w] += 1
                    if record:
                        rejections[n_rej_ev, 0] = rnd
                        rejections[n_rej_ev, 1] = q
                        rejections[n_rej_ev, 2] = w
                        rejections[n_rej_ev, 3] = p
                        rejections[n_rej_ev, 4] = DISPLACED
                        n_rej_ev += 1
                else:
                    pending[p] += 1
                    if record:
                        rejections[n_rej_ev, 0] = rnd
                        rejections[n_rej_ev, 1] = q
                        rejections[n_rej_ev, 2] = p
                        rejections[n_rej_ev, 3] = w
                        rejections[n_rej_ev, 4] = REFUSED
                        n_rej_ev += 1
        if not active:
            break
        rnd += 1
    return held, n_held, n_proposed, n_received, proposals[:n_prop_ev], rejections[:n_rej_ev]


@njit
def _college_mask(held, n_held, college, college_proposes):
    mask = 0
    if college_proposes:
        for s in range(held.shape[0]):
            if n_held[s] > 0 and held[s, 0] == college:
                mask |= 1 << s
    else:
        for i in range(n_held[college]):
            mask |= 1 << held[college, i]
    return mask


@njit
def enumerate_report_outcomes(prop_prefs, proposee_rank, prop_cap, proposee_cap, college, college_proposes):
    """Run DAA once for every permutation of ``college``'s list and return the
    bitmask of students the college ends with, one entry per permutation.

    Permutations are generated with Heap's algorithm, so the caller must keep
    the student count small (bitmasks need fewer than 63 students anyway).
    """
    if college_proposes:
        n = prop_prefs.shape[1]
    else:
        n = proposee_rank.shape[1]
    perm = np.arange(n)
    prefs = prop_prefs.copy()
    ranks = proposee_rank.copy()
    n_p = prefs.shape[0]
    order = np.arange(n_p)

    total = 1
    for i in range(2, n + 1):
        total *= i
    masks = np.empty(total, dtype=np.int64)
    stack = np.zeros(n, dtype=np.int64)
    k = 0
    i = 0
    while True:
        if college_proposes:
            for j in range(n):
                prefs[college, j] = perm[j]
        else:
            for j in range(n):
                ranks[college, perm[j]] = j
        held, n_held, _, _, _, _ = deferred_acceptance(prefs, ranks, prop_cap, proposee_cap, order, False)
        masks[k] = _college_mask(held, n_held, college, college_proposes)
        k += 1
        # advance to the next permutation (iterative Heap's algorithm)
        while i < n:
            if stack[i] < i:
                if i % 2 == 0:
                    tmp = perm[0]
                    perm[0] = perm[i]
                    perm[i] = tmp
                else:
                    tmp = perm[stack[i]]
                    perm[stack[i]] = perm[i]
                    perm[i] = tmp
                stack[i] += 1
                i = 0
                break
            stack[i] = 0
            i += 1
        if i >= n:
            break
    return masks[:k]
