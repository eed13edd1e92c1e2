# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: streaming shake/spin counting and the fused
environment + softmax-policy + detector rollout.

Every function mirrors ``_kernels_py`` operation for operation (same
summation order, same libm calls) so both backends produce identical floats.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, exp, floor, log, sqrt, isfinite, INFINITY, M_PI

cnp.import_array()

cdef int EMPTY = 0, YELLOW = 1, BLUE = 2
cdef int N_ACTIONS = 9
cdef int[4] DX = [1, 0, -1, 0]
cdef int[4] DY = [0, 1, 0, -1]


def shake_counts(const signed char[::1] rot, int w):
    cdef Py_ssize_t n = rot.shape[0], t
    out_arr = np.zeros(n, dtype=np.int32)
    cdef int[::1] out = out_arr
    cdef long[::1] starts = np.zeros(max(n, 1), dtype=np.int_)
    cdef Py_ssize_t head = 0, tail = 0
    cdef int last_turn = 0
    cdef long last_t = -1
    cdef signed char a
    for t in range(n):
        a = rot[t]
        if a != 0:
            if last_turn != 0 and last_turn != a:
                starts[tail] = last_t
                tail += 1
            last_turn = a
            last_t = t
        while head < tail and starts[head] < t - w + 1:
            head += 1
        if t >= w - 1:
            out[t] = <int>(tail - head)
    return out_arr


def spin_counts(const signed char[::1] rot, int steps_per_rev):
    cdef Py_ssize_t n = rot.shape[0], t
    out_arr = np.zeros(n, dtype=np.int32)
    cdef int[::1] out = out_arr
    cdef int direction = 0, acc = 0
    cdef signed char a
    for t in range(n):
        a = rot[t]
        if a == 0:
            continue
        if a != direction:
            direction = a
            acc = 0
        acc += 1
        if acc % steps_per_rev == 0:
            out[t] = 1
    return out_arr


cdef inline int move_direction(int heading, int H) nogil:
    return ((8 * heading + H) // (2 * H)) % 4


cdef inline int free_run(int x, int y, int dx, int dy, int g) nogil:
    if dx > 0:
        return g - 1 - x
    if dx < 0:
        return x
    if dy > 0:
        return g - 1 - y
    return y


cdef void observe(signed char[::1] cells, int x0, int y0, int heading, int g, int H,
                  int R, double[::1] feats, double* nearest) noexcept nogil:
    cdef int F = 3 * H + 3, i, xx, yy, dx, dy, sector, slot, item, d_idx
    cdef double dist, rel, base, width
    for i in range(F):
        feats[i] = 0.0
    feats[heading] = 1.0
    d_idx = move_direction(heading, H)
    base = d_idx * 90.0
    width = 360.0 / H
    for i in range(2 * H):
        nearest[i] = INFINITY
    for yy in range(max(0, y0 - R), min(g, y0 + R + 1)):
        for xx in range(max(0, x0 - R), min(g, x0 + R + 1)):
            item = cells[yy * g + xx]
            if item == EMPTY:
                continue
            dx = xx - x0
            dy = yy - y0
            dist = sqrt(<double>(dx * dx + dy * dy))
            if dist > R:
                continue
            rel = atan2(<double>dy, <double>dx) * (180.0 / M_PI) - base
            sector = <int>floor(rel / width + 0.5)
            sector = ((sector % H) + H) % H
            slot = 2 * sector + (item - 1)
            if dist < nearest[slot]:
                nearest[slot] = dist
    for slot in range(2 * H):
        if nearest[slot] <= R:
            feats[H + slot] = ((<double>(R + 1)) - nearest[slot]) / R
    dx = DX[d_idx]
    dy = DY[d_idx]
    feats[3 * H] = (<double>free_run(x0, y0, dx, dy, g)) / (<double>(g - 1))
    feats[3 * H + 1] = (<double>free_run(x0, y0, -dx, -dy, g)) / (<double>(g - 1))
    feats[3 * H + 2] = 1.0


cdef Py_ssize_t place(signed char[::1] cells, int agent, int color, int n,
                      const double[::1] pool, Py_ssize_t pos) noexcept nogil:
    cdef int k, i, free, target, ncell = cells.shape[0]
    for k in range(n):
        free = 0
        for i in range(ncell):
            if cells[i] == EMPTY and i != agent:
                free += 1
        target = <int>(pool[pos] * free)
        pos += 1
        if target > free - 1:
            target = free - 1
        for i in range(ncell):
            if cells[i] == EMPTY and i != agent:
                if target == 0:
                    cells[i] = color
                    break
                target -= 1
    return pos


def rollout_episode(cfg, state, const double[:, ::1] weights, const double[::1] uniforms,
                    int w, int step_angle):
    """Play one full episode from ``state`` (mutated in place to the final
    state).  Same contract as ``_kernels_py.rollout_episode``."""
    cdef int g = cfg.grid_size, T = cfg.episode_steps, H = cfg.heading_steps
    cdef int R = cfg.observation_radius, refill = cfg.refill_interval
    cdef int F = 3 * H + 3
    cdef int steps_per_rev = 360 // step_angle
    cdef signed char[::1] cells = np.asarray(state.cells, dtype=np.int8)
    cdef const double[::1] pool = np.ascontiguousarray(state.pool, dtype=np.float64)
    cdef Py_ssize_t pos = state.pool_pos
    cdef int x = state.x, y = state.y, heading = state.heading, step_count = state.step_count
    cdef int pend_y = state.pending_yellow, pend_b = state.pending_blue

    feats_arr = np.zeros((T, F))
    actions_arr = np.zeros(T, dtype=np.int8)
    logp_arr = np.zeros(T)
    rewards_arr = np.zeros(T)
    rot_arr = np.zeros(T, dtype=np.int8)
    shake_arr = np.zeros(T, dtype=np.int32)
    spins_arr = np.zeros(T, dtype=np.int32)
    cdef double[:, ::1] feats = feats_arr
    cdef signed char[::1] actions = actions_arr
    cdef double[::1] logp = logp_arr
    cdef double[::1] rewards = rewards_arr
    cdef signed char[::1] rot = rot_arr
    cdef int[::1] shake = shake_arr
    cdef int[::1] spins = spins_arr

    cdef double[::1] obs = np.zeros(F)
    cdef double nearest[64]
    cdef double logits[9]
    cdef double exps[9]
    cdef long[::1] starts = np.zeros(T + 1, dtype=np.int_)
    cdef Py_ssize_t head = 0, tail = 0
    cdef int last_turn = 0, spin_dir = 0, spin_acc = 0
    cdef long last_t = -1
    cdef int t, f, a, choice, move, turn, d_idx, dx, dy, nx, ny, cell, item, agent
    cdef double m, s, cum, threshold, xf, r
    if 2 * H > 64:
        raise ValueError("heading_steps too large for compiled kernel")
    if step_count != 0:
        raise ValueError("rollout_episode needs a freshly reset state")
    if pool.shape[0] < cfg.pool_size:
        raise ValueError("random pool too small")

    with nogil:
        observe(cells, x, y, heading, g, H, R, obs, nearest)
        for t in range(T):
            for f in range(F):
                feats[t, f] = obs[f]
            # softmax sample
            for a in range(N_ACTIONS):
                logits[a] = 0.0
            for f in range(F):
                xf = obs[f]
                if xf != 0.0:
                    for a in range(N_ACTIONS):
                        logits[a] += xf * weights[f, a]
            m = logits[0]
            for a in range(N_ACTIONS):
                if not isfinite(logits[a]):
                    with gil:
                        raise FloatingPointError("non-finite policy logits")
                if logits[a] > m:
                    m = logits[a]
            s = 0.0
            for a in range(N_ACTIONS):
                exps[a] = exp(logits[a] - m)
            for a in range(N_ACTIONS):
                s += exps[a]
            threshold = uniforms[t] * s
            cum = 0.0
            choice = N_ACTIONS - 1
            for a in range(N_ACTIONS):
                cum += exps[a]
                if threshold < cum:
                    choice = a
                    break
            logp[t] = (logits[choice] - m) - log(s)
            actions[t] = choice
            move = choice // 3
            turn = choice % 3
            # environment step: move, then rotate
            r = 0.0
            if move != 0:
                d_idx = move_direction(heading, H)
                dx = DX[d_idx]
                dy = DY[d_idx]
                if move == 2:
                    dx = -dx
                    dy = -dy
                nx = x + dx
                ny = y + dy
                if 0 <= nx < g and 0 <= ny < g:
                    x = nx
                    y = ny
                    cell = ny * g + nx
                    item = cells[cell]
                    if item == YELLOW:
                        r = 1.0
                        pend_y += 1
                    elif item == BLUE:
                        r = -1.0
                        pend_b += 1
                    cells[cell] = EMPTY
            if turn == 1:
                heading = (heading + 1) % H
            elif turn == 2:
                heading = (heading - 1 + H) % H
            step_count += 1
            if step_count % refill == 0:
                agent = y * g + x
                pos = place(cells, agent, YELLOW, pend_y, pool, pos)
                pos = place(cells, agent, BLUE, pend_b, pool, pos)
                pend_y = 0
                pend_b = 0
            rewards[t] = r
            rot[t] = turn
            # streaming shake detector
            if turn != 0:
                if last_turn != 0 and last_turn != turn:
                    starts[tail] = last_t
                    tail += 1
                last_turn = turn
                last_t = t
            while head < tail and starts[head] < t - w + 1:
                head += 1
            if t >= w - 1:
                shake[t] = <int>(tail - head)
            # streaming spin detector
            if turn != 0:
                if turn != spin_dir:
                    spin_dir = turn
                    spin_acc = 0
                spin_acc += 1
                if spin_acc % steps_per_rev == 0:
                    spins[t] = 1
            observe(cells, x, y, heading, g, H, R, obs, nearest)

    state.cells = [int(c) for c in cells]
    state.x = x
    state.y = y
    state.heading = heading
    state.step_count = step_count
    state.pending_yellow = pend_y
    state.pending_blue = pend_b
    state.pool_pos = pos
    return {"features": feats_arr, "actions": actions_arr, "logp": logp_arr,
            "rewards": rewards_arr, "rotations": rot_arr, "shake": shake_arr,
            "spins": spins_arr}
