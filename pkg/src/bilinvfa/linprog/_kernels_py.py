"""Reference (numpy) implementation of the simplex pivot loop.

Mirrors ``_kernels.pyx``: same pricing, same ratio-test tie-breaking, same
state bookkeeping.  Floating-point summation order differs, so the two may
break near-ties differently.
"""

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
PIVOT_LIMIT = 2

#: ratios within this relative gap count as tied in the ratio test
RATIO_TIE = 1e-12
#: primal infeasibility tolerated by the Harris ratio test
HARRIS_DELTA = 1e-9
#: under Bland's rule, tied rows with a pivot below this share of the largest are skipped
BLAND_PIVOT_SHARE = 1e-3


def run_pivots(A, c, basis, is_basic, Binv, xB, eligible, tol_piv, tol_opt,
               max_pivots, degen_limit, state):
    """Run up to ``max_pivots`` primal simplex pivots in place.

    ``state`` holds ``[consecutive degenerate pivots, total pivots, entering
    column on unbounded exit]``.  Dantzig pricing is used until
    ``degen_limit`` consecutive degenerate pivots occur, after which Bland's
    rule is used until the next nondegenerate pivot.
    """
    n = basis.shape[0]
    for k in range(max_pivots):
        pi = Binv.T @ c[basis]
        d = c - A.T @ pi
        mask = (eligible != 0) & (is_basic == 0) & (d < -tol_opt)
        if not mask.any():
            return OPTIMAL, k
        bland = state[0] >= degen_limit
        if bland:
            q = int(np.argmax(mask))
        else:
            q = int(np.argmin(np.where(mask, d, np.inf)))
        alpha = Binv @ A[:, q]
        pos = alpha > tol_piv
        if not pos.any():
            state[2] = q
            return UNBOUNDED, k
        xpos = np.maximum(xB[pos], 0.0)
        ratios = np.full(n, np.inf)
        ratios[pos] = xpos / alpha[pos]
        if bland:
            theta = ratios.min()
            tied = np.flatnonzero(ratios <= theta + RATIO_TIE * (1.0 + theta))
            tied = tied[alpha[tied] >= BLAND_PIVOT_SHARE * alpha[tied].max()]
            p = int(tied[np.argmin(basis[tied])])
        else:
            bound = np.min((xpos + HARRIS_DELTA) / alpha[pos])
            cand = np.flatnonzero(ratios <= bound)
            p = int(cand[np.argmax(alpha[cand])])
        theta = max(xB[p], 0.0) / alpha[p]

        xB -= theta * alpha
        xB[p] = theta
        row = Binv[p] / alpha[p]
        Binv -= np.outer(alpha, row)
        Binv[p] = row
        is_basic[basis[p]] = 0
        is_basic[q] = 1
        basis[p] = q
        state[0] = state[0] + 1 if theta <= RATIO_TIE else 0
        state[1] += 1
    return PIVOT_LIMIT, max_pivots
