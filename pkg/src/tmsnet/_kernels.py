"""Hot numeric kernels with numba and pure-numpy implementations.

Two loops dominate the runtime of the package:

* ``kron_sector_coo`` - assembling a sandwich term ``rho -> c * L rho R`` as a
  sparse superoperator restricted to one charge sector of the column-stacked
  density vector.  Called once per Liouvillian term.
* ``resolvent_block`` - evaluating ``(i w - A)^-1 V`` for a 2x2 drift block
  over a grid of frequencies.  Called inside the filtered-mode quadrature.

The public names dispatch on :data:`tmsnet._accel.USE_NUMBA`; both variants
are importable for benchmarking.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# -- sector-restricted Kronecker assembly -----------------------------------
#
# Column stacking: vec(rho)[c*d + r] = rho[r, c] and vec(L rho R) = (R^T kron L)
# vec(rho).  An entry of the product couples output (r, c) to input (r', c')
# with value L[r, r'] * R^T[c, c'].  ``pos`` maps a full vec index to its
# position inside the sector (-1 when outside).


@njit(cache=True)
def _kron_count_nb(l_ptr, l_idx, rt_ptr, rt_idx, d, pos):
    count = 0
    for c in range(d):
        for jt in range(rt_ptr[c], rt_ptr[c + 1]):
            cp = rt_idx[jt]
            for r in range(d):
                if pos[c * d + r] < 0:
                    continue
                for jl in range(l_ptr[r], l_ptr[r + 1]):
                    if pos[cp * d + l_idx[jl]] >= 0:
                        count += 1
    return count


@njit(cache=True)
def _kron_fill_nb(l_ptr, l_idx, l_val, rt_ptr, rt_idx, rt_val, d, pos, coef,
                  rows, cols, vals):
    k = 0
    for c in range(d):
        for jt in range(rt_ptr[c], rt_ptr[c + 1]):
            cp = rt_idx[jt]
            t = coef * rt_val[jt]
            for r in range(d):
                prow = pos[c * d + r]
                if prow < 0:
                    continue
                for jl in range(l_ptr[r], l_ptr[r + 1]):
                    pcol = pos[cp * d + l_idx[jl]]
                    if pcol >= 0:
                        rows[k] = prow
                        cols[k] = pcol
                        vals[k] = t * l_val[jl]
                        k += 1
    return k


def kron_sector_coo_numba(left, right_t, pos, coef):
    """Sparse COO entries of ``rho -> coef * L rho R`` inside one sector.

    Parameters
    ----------
    left : scipy.sparse.csr_matrix
        Left factor ``L`` (d x d).
    right_t : scipy.sparse.csr_matrix
        Transpose of the right factor, ``R^T`` (d x d).
    pos : ndarray of int64, shape (d*d,)
        Position of each column-stacked vec index in the sector, -1 if absent.
    coef : complex
        Prefactor.

    Returns
    -------
    rows, cols, vals : ndarray
        COO triplets in sector coordinates (duplicates allowed).
    """
    d = left.shape[0]
    n = _kron_count_nb(left.indptr, left.indices, right_t.indptr, right_t.indices, d, pos)
    rows = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.complex128)
    _kron_fill_nb(left.indptr, left.indices, left.data.astype(np.complex128),
                  right_t.indptr, right_t.indices, right_t.data.astype(np.complex128),
                  d, pos, complex(coef), rows, cols, vals)
    return rows, cols, vals


def kron_sector_coo_numpy(left, right_t, pos, coef, chunk=2_000_000):
    """Numpy variant of :func:`kron_sector_coo` (broadcast over nonzeros)."""
    d = left.shape[0]
    lc = left.tocoo()
    rc = right_t.tocoo()
    l_r, l_rp, l_v = lc.row.astype(np.int64), lc.col.astype(np.int64), lc.data
    out_r, out_c, out_v = [], [], []
    step = max(1, chunk // max(1, l_r.size))
    for s in range(0, rc.nnz, step):
        c = rc.row[s:s + step, None].astype(np.int64)
        cp = rc.col[s:s + step, None].astype(np.int64)
        prow = pos[c * d + l_r[None, :]]
        pcol = pos[cp * d + l_rp[None, :]]
        mask = (prow >= 0) & (pcol >= 0)
        if not mask.any():
            continue
        v = coef * rc.data[s:s + step, None] * l_v[None, :]
        out_r.append(prow[mask])
        out_c.append(pcol[mask])
        out_v.append(v[mask])
    if not out_r:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.complex128))
    return (np.concatenate(out_r), np.concatenate(out_c),
            np.concatenate(out_v).astype(np.complex128))


# -- 2x2 resolvent on a frequency grid --------------------------------------


@njit(cache=True)
def _resolvent_nb(omega, a11, a12, a21, a22, v11, v12, v21, v22, out):
    for k in range(omega.size):
        z = 1j * omega[k]
        b11 = z - a11
        b22 = z - a22
        det = b11 * b22 - a12 * a21
        i11 = b22 / det
        i12 = a12 / det
        i21 = a21 / det
        i22 = b11 / det
        out[0, k] = i11 * v11 + i12 * v21
        out[1, k] = i11 * v12 + i12 * v22
        out[2, k] = i21 * v11 + i22 * v21
        out[3, k] = i21 * v12 + i22 * v22


def resolvent_block_numba(omega, block, vblock):
    """Numba variant of :func:`resolvent_block`."""
    omega = np.ascontiguousarray(omega, dtype=np.float64).ravel()
    out = np.empty((4, omega.size), dtype=np.complex128)
    a = np.asarray(block, dtype=np.complex128)
    v = np.asarray(vblock, dtype=np.complex128)
    _resolvent_nb(omega, a[0, 0], a[0, 1], a[1, 0], a[1, 1],
                  v[0, 0], v[0, 1], v[1, 0], v[1, 1], out)
    return out


def resolvent_block_numpy(omega, block, vblock):
    """Entries ``(X11, X12, X21, X22)`` of ``X = (i w - A)^-1 V``, one row each.

    ``block`` is the 2x2 drift block ``A``, ``vblock`` the matching 2x2 block
    of the covariance ``V``; ``omega`` may be any real array.
    """
    omega = np.asarray(omega, dtype=np.float64).ravel()
    a = np.asarray(block, dtype=np.complex128)
    v = np.asarray(vblock, dtype=np.complex128)
    z = 1j * omega
    b11 = z - a[0, 0]
    b22 = z - a[1, 1]
    det = b11 * b22 - a[0, 1] * a[1, 0]
    i11, i12, i21, i22 = b22 / det, a[0, 1] / det, a[1, 0] / det, b11 / det
    return np.stack([
        i11 * v[0, 0] + i12 * v[1, 0],
        i11 * v[0, 1] + i12 * v[1, 1],
        i21 * v[0, 0] + i22 * v[1, 0],
        i21 * v[0, 1] + i22 * v[1, 1],
    ])


if USE_NUMBA:
    kron_sector_coo = kron_sector_coo_numba
    resolvent_block = resolvent_block_numba
else:
    kron_sector_coo = kron_sector_coo_numpy
    resolvent_block = resolvent_block_numpy
