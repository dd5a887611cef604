"""Numba kernels for backward induction, greedy decisions and simulation.

Inventory is handled as an integer index on the grid ``k * resolution``;
``spu`` is the number of grid steps per energy unit. Scalar parameters are
passed packed in two arrays (``prm`` floats, ``iprm`` ints) whose slots are
named by the module constants below.
"""

import numpy as np
from numba import config, njit, prange

# an outdated system TBB only produces a warning; prefer OpenMP
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

EPS = 1e-9
NEG = -np.inf

# prm slots
U = 0
PREMIUM = 1
PPA_PRICE = 2
PEN = 3
ALPHA = 4
H2_FIXED = 5
QH = 6
H2_GAIN = 7
N_PRM = 8

# iprm slots
KC = 0
KF = 1
KE_IDX = 2
KH_IDX = 3
NI = 4
SPU = 5
QPPA = 6
NPPA = 7
MODE = 8
NH = 9
QH_IDX = 10
N_IPRM = 11

MODE_NONE = 0
MODE_FREE = 1
MODE_PERIODIC = 2
MODE_FIXED = 3

# sale kinds for one period
SALE_NONE = 0
SALE_FREE = 1
SALE_FORCED = 2

# per-replication statistics
S_SELL, S_BUY, S_PPA, S_H2, S_TOTAL = 0, 1, 2, 3, 4
S_DAYS_H2, S_DAYS_BUY, S_DAYS_SELL, S_DAYS_PPA = 5, 6, 7, 8
S_SELL_UNITS, S_BUY_UNITS, S_H2_UNITS = 9, 10, 11
S_SELL_PV, S_BUY_PV, S_H2_PV = 12, 13, 14
S_LOSS_UNITS, S_CURTAILED = 15, 16
S_DEADLINES, S_PPA_SHORT, S_DUES, S_H2_SHORT = 17, 18, 19, 20
S_PPA_SHORT_UNITS, S_H2_SHORT_UNITS = 21, 22
S_XIN, S_XOUT = 23, 24
S_DAYS = 25
N_STATS = 26

TRACE_FIELDS = (
    "year", "t", "pe_idx", "ph_idx", "pe", "ph", "y", "I", "v",
    "sell", "buy", "ppa", "h2", "x_in", "x_out", "curtailed", "I_star", "v_star",
    "r_sell", "r_buy", "r_ppa", "r_h2", "r_total",
)
N_TRACE = len(TRACE_FIELDS)


@njit(cache=True)
def sale_kind(t, iprm):
    mode = iprm[MODE]
    if mode == MODE_FREE:
        return SALE_FREE
    if mode == MODE_PERIODIC:
        return SALE_FREE if t % iprm[NH] == 0 else SALE_NONE
    if mode == MODE_FIXED:
        return SALE_FORCED if t % iprm[NH] == 0 else SALE_NONE
    return SALE_NONE


@njit(cache=True)
def x_in_idx(raw, I, xo_idx, prm, iprm):
    if raw <= 0:
        return 0
    a = int(np.floor(prm[ALPHA] * raw * iprm[SPU] + EPS))
    cap = iprm[NI] - 1 - I + xo_idx
    return min(a, iprm[KE_IDX], cap)


@njit(cache=True)
def max_buy(I, prm, iprm):
    room = (iprm[NI] - 1 - I) / iprm[SPU] / prm[ALPHA]
    return min(iprm[KC], int(np.floor(room + EPS)))


@njit(cache=True)
def forced_h2_idx(J, iprm):
    return min(iprm[QH_IDX], J, iprm[KH_IDX])


@njit(cache=True)
def fill_g(Vt, G, sale, h2_price, prm, iprm):
    """Best continuation after the hydrogen sale, per (v_star, J).

    ``Vt`` has shape (nI, nv); ``G`` has shape (nv, nI).
    """
    n_i, nv = Vt.shape
    spu = iprm[SPU]
    u = prm[U]
    if sale == SALE_NONE:
        for vs in range(nv):
            for j in range(n_i):
                G[vs, j] = Vt[j, vs]
    elif sale == SALE_FREE:
        step = h2_price * u * prm[H2_GAIN] / spu
        w = iprm[KH_IDX]
        dq = np.empty(n_i, dtype=np.int64)
        for vs in range(nv):
            head = 0
            tail = 0
            for j in range(n_i):
                val = Vt[j, vs] - step * j
                while tail > head and Vt[dq[tail - 1], vs] - step * dq[tail - 1] <= val:
                    tail -= 1
                dq[tail] = j
                tail += 1
                while dq[head] < j - w:
                    head += 1
                k = dq[head]
                G[vs, j] = step * j + (Vt[k, vs] - step * k)
    else:
        pen_u = prm[PEN] * u
        for vs in range(nv):
            for j in range(n_i):
                m = forced_h2_idx(j, iprm)
                sold = m / spu
                G[vs, j] = prm[H2_FIXED] * u * prm[H2_GAIN] * sold - pen_u * (prm[QH] - sold) + Vt[j - m, vs]


@njit(cache=True)
def _eval_market(y, I, v, dl, pe, sell, buy, ppa, prm, iprm):
    """(feasible, J, v_star, reward excl. hydrogen) of one market action."""
    spu = iprm[SPU]
    u = prm[U]
    if buy == 0:
        n = sell + ppa
        raw = y - n if y > n else 0
        xo = n - y if n > y else 0
    else:
        raw = buy + (y - ppa if y > ppa else 0)
        xo = ppa - y if ppa > y else 0
    if xo > iprm[KF]:
        return False, 0, 0, 0.0
    xo_idx = xo * spu
    xin = x_in_idx(raw, I, xo_idx, prm, iprm)
    if xo_idx > I + xin:
        return False, 0, 0, 0.0
    J = I + xin - xo_idx
    vs = iprm[QPPA] if dl else v - ppa
    r = u * (pe * sell - (pe + prm[PREMIUM]) * buy + prm[PPA_PRICE] * ppa)
    if dl:
        r -= prm[PEN] * u * (v - ppa)
    return True, J, vs, r


@njit(cache=True)
def market_best(y, I, v, dl, pe, G, prm, iprm):
    """Max over all market actions of reward + G (brute force)."""
    kc = iprm[KC]
    best = NEG
    for sell in range(kc + 1):
        for ppa in range(min(v, kc - sell) + 1):
            ok, J, vs, r = _eval_market(y, I, v, dl, pe, sell, 0, ppa, prm, iprm)
            if ok:
                val = r + G[vs, J]
                if val > best:
                    best = val
    for buy in range(1, max_buy(I, prm, iprm) + 1):
        for ppa in range(min(v, kc) + 1):
            ok, J, vs, r = _eval_market(y, I, v, dl, pe, 0, buy, ppa, prm, iprm)
            if ok:
                val = r + G[vs, J]
                if val > best:
                    best = val
    return best


@njit(cache=True)
def _h2_value(m, sale, h2_price, prm, iprm):
    u = prm[U]
    sold = m / iprm[SPU]
    if sale == SALE_FORCED:
        return prm[H2_FIXED] * u * prm[H2_GAIN] * sold - prm[PEN] * u * (prm[QH] - sold)
    return h2_price * u * prm[H2_GAIN] * sold


@njit(cache=True)
def greedy(y, I, v, t, pe, h2_price, Vt, G, prm, iprm):
    """Optimal decision with ties broken by (h2, sell, ppa, buy) ascending.

    Returns (sell, buy, ppa, h2_idx, J, v_star, value).
    """
    dl = t % iprm[NPPA] == 0
    sale = sale_kind(t, iprm)
    fill_g(Vt, G, sale, h2_price, prm, iprm)
    best = market_best(y, I, v, dl, pe, G, prm, iprm)
    tol = 1e-9 * max(1.0, abs(best))
    kc = iprm[KC]
    bmax = max_buy(I, prm, iprm)
    key_h = 1 << 60
    key_s = 0
    key_p = 0
    key_b = 0
    out_j = 0
    out_vs = 0
    for sell in range(kc + 1):
        for ppa in range(kc + 1):
            for buy in range(bmax + 1):
                if sell > 0 and buy > 0:
                    break
                if buy == 0:
                    if ppa > min(v, kc - sell):
                        continue
                elif ppa > min(v, kc):
                    continue
                ok, J, vs, r = _eval_market(y, I, v, dl, pe, sell, buy, ppa, prm, iprm)
                if not ok or r + G[vs, J] < best - tol:
                    continue
                # smallest hydrogen sale reaching the optimum
                m_found = -1
                if sale == SALE_FREE:
                    for m in range(min(J, iprm[KH_IDX]) + 1):
                        if m > key_h:
                            break
                        if r + _h2_value(m, sale, h2_price, prm, iprm) + Vt[J - m, vs] >= best - tol:
                            m_found = m
                            break
                elif sale == SALE_FORCED:
                    m_found = forced_h2_idx(J, iprm)
                else:
                    m_found = 0
                if m_found < 0:
                    continue
                if m_found < key_h:
                    key_h, key_s, key_p, key_b = m_found, sell, ppa, buy
                    out_j, out_vs = J, vs
    return key_s, key_b, key_p, key_h, out_j, out_vs, best


@njit(cache=True)
def _cell_reference(G, pmf, pe, dl, I_count, nv, prm, iprm, out):
    ly = pmf.shape[0]
    for v in range(nv):
        for I in range(I_count):
            acc = 0.0
            for y in range(ly):
                if pmf[y] == 0.0:
                    continue
                acc += pmf[y] * market_best(y, I, v, dl, pe, G, prm, iprm)
            out[I, v] = acc


@njit(cache=True)
def _cell_fast(G, pmf, pe, dl, I_count, nv, prm, iprm, out):
    """Same result as ``_cell_reference`` with the PPA split folded out of
    the selling branch and a sliding-window max over purchases."""
    ly = pmf.shape[0]
    kc = iprm[KC]
    kf = iprm[KF]
    spu = iprm[SPU]
    u = prm[U]
    q = iprm[QPPA]
    pen_u = prm[PEN] * u
    buy_price_u = u * (pe + prm[PREMIUM])
    pmax = min(nv - 1, kc)
    K = np.empty((pmax + 1, I_count))
    B = np.empty((pmax + 1, I_count))
    Jd = np.empty(kc + ly, dtype=np.int64)
    W = np.empty(ly)
    rmax = ly - 1 + kc
    F = np.empty(rmax + 1)
    dq = np.empty(rmax + 1, dtype=np.int64)
    for v in range(nv):
        top = min(v, kc)
        for p in range(top + 1):
            vs = q if dl else v - p
            pay = u * prm[PPA_PRICE] * p
            if dl:
                pay -= pen_u * (v - p)
            shift = pay - u * pe * p
            for J in range(I_count):
                B[p, J] = pay + G[vs, J]
                a = shift + G[vs, J]
                if p == 0 or a > K[p - 1, J]:
                    K[p, J] = a
                else:
                    K[p, J] = K[p - 1, J]
        for I in range(I_count):
            # selling branch: net surplus d = y - n, stored at Jd[d + kc]
            for d in range(-kc, ly):
                if d >= 0:
                    Jd[d + kc] = I + x_in_idx(d, I, 0, prm, iprm)
                else:
                    xo = -d
                    if xo > kf or xo * spu > I:
                        Jd[d + kc] = -1
                    else:
                        Jd[d + kc] = I - xo * spu
            for y in range(ly):
                best = NEG
                for n in range(kc + 1):
                    J = Jd[y - n + kc]
                    if J < 0:
                        continue
                    m = n if n < top else top
                    val = u * pe * n + K[m, J]
                    if val > best:
                        best = val
                W[y] = best
            bmax = max_buy(I, prm, iprm)
            if bmax >= 1:
                # purchases with ppa <= y: raw = buy + y - ppa, nothing withdrawn
                for p in range(top + 1):
                    for r in range(1, rmax + 1):
                        J = I + x_in_idx(r, I, 0, prm, iprm)
                        F[r] = B[p, J] - buy_price_u * r
                    head = 0
                    tail = 0
                    nxt = 1
                    for z in range(0, ly - p):
                        hi = z + bmax
                        while nxt <= hi:
                            while tail > head and F[dq[tail - 1]] <= F[nxt]:
                                tail -= 1
                            dq[tail] = nxt
                            tail += 1
                            nxt += 1
                        while dq[head] < z + 1:
                            head += 1
                        val = buy_price_u * z + F[dq[head]]
                        y = z + p
                        if val > W[y]:
                            W[y] = val
                # purchases with ppa > y: storage covers part of the PPA
                for y in range(ly):
                    for p in range(y + 1, top + 1):
                        for buy in range(1, bmax + 1):
                            ok, J, vs, r = _eval_market(y, I, v, dl, pe, 0, buy, p, prm, iprm)
                            if ok:
                                val = r + G[vs, J]
                                if val > W[y]:
                                    W[y] = val
            acc = 0.0
            for y in range(ly):
                if pmf[y] != 0.0:
                    acc += pmf[y] * W[y]
            out[I, v] = acc


@njit(cache=True, parallel=True)
def backward(V, Pe, Ph, pe_lv, ph_lv, prod, prm, iprm, fast):
    """Fill ``V[t]`` for t = T-1 .. 0; ``V[T]`` must already be zero."""
    T = prod.shape[0]
    le, lh, n_i, nv = V.shape[1], V.shape[2], V.shape[3], V.shape[4]
    Uexp = np.zeros((le, lh, n_i, nv))
    tmp = np.zeros((le, lh, n_i, nv))
    for t in range(T, 0, -1):
        dl = t % iprm[NPPA] == 0
        sale = sale_kind(t, iprm)
        pmf = prod[t - 1]
        for cell in prange(le * lh):
            a = cell // lh
            b = cell % lh
            G = np.empty((nv, n_i))
            h2_price = ph_lv[b]
            fill_g(V[t, a, b], G, sale, h2_price, prm, iprm)
            if fast:
                _cell_fast(G, pmf, pe_lv[a], dl, n_i, nv, prm, iprm, Uexp[a, b])
            else:
                _cell_reference(G, pmf, pe_lv[a], dl, n_i, nv, prm, iprm, Uexp[a, b])
        # expectation over next prices: hydrogen first, then electricity
        for a in prange(le):
            for b0 in range(lh):
                for i in range(n_i):
                    for v in range(nv):
                        s = 0.0
                        for b in range(lh):
                            s += Ph[b0, b] * Uexp[a, b, i, v]
                        tmp[a, b0, i, v] = s
        for a0 in prange(le):
            for b0 in range(lh):
                for i in range(n_i):
                    for v in range(nv):
                        s = 0.0
                        for a in range(le):
                            s += Pe[a0, a] * tmp[a, b0, i, v]
                        V[t - 1, a0, b0, i, v] = s


@njit(cache=True)
def _draw(cum, u):
    k = np.searchsorted(cum, u, side="right")
    if k >= cum.shape[0]:
        k = cum.shape[0] - 1
    return k


@njit(cache=True)
def simulate_batch(
    V, Pe_cum, Ph_cum, prod_cum, pe_lv, ph_lv, uniforms, years,
    pe0, ph0, I0, v0, prm, iprm, months, stats, month_inv, heat, traces,
):
    """Replay the greedy policy along pre-drawn uniforms.

    ``uniforms`` has shape (reps, years * T, 3): electricity, hydrogen and
    production draws. Results accumulate into ``stats`` (reps, N_STATS),
    ``month_inv`` (reps, 12, summed post-decision inventory in units by
    calendar month ``months[t - 1]``), ``heat`` (T, nI) and the first
    ``traces.shape[0]`` replications' traces.
    """
    reps = uniforms.shape[0]
    T = prod_cum.shape[0]
    n_i, nv = V.shape[3], V.shape[4]
    spu = iprm[SPU]
    u = prm[U]
    alpha = prm[ALPHA]
    q = iprm[QPPA]
    n_trace = traces.shape[0]
    G = np.empty((nv, n_i))
    for rep in range(reps):
        a = pe0
        b = ph0
        I = I0
        st = stats[rep]
        for yr in range(years):
            v = v0 if yr == 0 else q
            for t in range(1, T + 1):
                k = yr * T + t - 1
                a = _draw(Pe_cum[a], uniforms[rep, k, 0])
                b = _draw(Ph_cum[b], uniforms[rep, k, 1])
                y = _draw(prod_cum[t - 1], uniforms[rep, k, 2])
                pe = pe_lv[a]
                sale = sale_kind(t, iprm)
                h2_price = prm[H2_FIXED] if iprm[MODE] == MODE_FIXED else ph_lv[b]
                sell, buy, ppa, m, J, vs, _ = greedy(y, I, v, t, pe, h2_price, V[t, a, b], G, prm, iprm)
                dl = t % iprm[NPPA] == 0
                # flows
                if buy == 0:
                    n = sell + ppa
                    raw = y - n if y > n else 0
                    xo = n - y if n > y else 0
                else:
                    raw = buy + (y - ppa if y > ppa else 0)
                    xo = ppa - y if ppa > y else 0
                xin = J - I + xo * spu
                x_in_units = xin / spu
                curtailed = raw - x_in_units / alpha
                h2_units = m / spu
                r_sell = pe * sell * u
                r_buy = -(pe + prm[PREMIUM]) * buy * u
                r_ppa = prm[PPA_PRICE] * ppa * u
                if dl:
                    r_ppa -= prm[PEN] * (v - ppa) * u
                r_h2 = h2_price * h2_units * u * prm[H2_GAIN]
                if sale == SALE_FORCED:
                    r_h2 -= prm[PEN] * (prm[QH] - h2_units) * u
                r_total = r_sell + r_buy + r_ppa + r_h2
                I_new = J - m
                st[S_SELL] += r_sell
                st[S_BUY] += r_buy
                st[S_PPA] += r_ppa
                st[S_H2] += r_h2
                st[S_TOTAL] += r_total
                st[S_DAYS] += 1
                if m > 0:
                    st[S_DAYS_H2] += 1
                if buy > 0:
                    st[S_DAYS_BUY] += 1
                if sell > 0:
                    st[S_DAYS_SELL] += 1
                if ppa > 0:
                    st[S_DAYS_PPA] += 1
                st[S_SELL_UNITS] += sell
                st[S_BUY_UNITS] += buy
                st[S_H2_UNITS] += h2_units
                st[S_SELL_PV] += pe * sell
                st[S_BUY_PV] += pe * buy
                st[S_H2_PV] += h2_price * h2_units
                st[S_LOSS_UNITS] += x_in_units * (1.0 - alpha) / alpha
                st[S_CURTAILED] += curtailed
                st[S_XIN] += x_in_units
                st[S_XOUT] += xo
                if dl:
                    st[S_DEADLINES] += 1
                    if v - ppa > 0:
                        st[S_PPA_SHORT] += 1
                        st[S_PPA_SHORT_UNITS] += v - ppa
                if sale == SALE_FORCED:
                    st[S_DUES] += 1
                    short = prm[QH] - h2_units
                    if short > 1e-12:
                        st[S_H2_SHORT] += 1
                        st[S_H2_SHORT_UNITS] += short
                heat[t - 1, I_new] += 1
                month_inv[rep, months[t - 1]] += I_new / spu
                if rep < n_trace:
                    tr = traces[rep, k]
                    tr[0] = yr
                    tr[1] = t
                    tr[2] = a
                    tr[3] = b
                    tr[4] = pe
                    tr[5] = h2_price
                    tr[6] = y
                    tr[7] = I / spu
                    tr[8] = v
                    tr[9] = sell
                    tr[10] = buy
                    tr[11] = ppa
                    tr[12] = h2_units
                    tr[13] = x_in_units
                    tr[14] = xo
                    tr[15] = curtailed
                    tr[16] = I_new / spu
                    tr[17] = vs
                    tr[18] = r_sell
                    tr[19] = r_buy
                    tr[20] = r_ppa
                    tr[21] = r_h2
                    tr[22] = r_total
                I = I_new
                v = vs
