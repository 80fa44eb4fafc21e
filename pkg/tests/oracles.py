"""Independent brute-force oracles used by the test suite.

Everything here is written from first principles (explicit index math,
dense matrices, all-pairs scans) and never calls the package's kernel or
solver code, so agreement between the two paths is meaningful.
"""

import numpy as np


def reflect_index(i, n):
    """Half-sample symmetric fold: ... 1 0 | 0 1 .. n-1 | n-1 n-2 ..."""
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        if i >= n:
            i = 2 * n - 1 - i
    return i


def band_matrix(weights, n):
    """Dense matrix B with (B @ f)[i] = sum_t w[t] * f[reflect(i + t - R)]."""
    taps = len(weights)
    radius = taps // 2
    mat = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for t in range(taps):
            mat[i, reflect_index(i + t - radius, n)] += weights[t]
    return mat


def kernel_matrix(weights_xyz, shape):
    """Full (N, N) effective kernel for a separable reflect-boundary blur.

    Row index = output voxel, column = source voxel, C-order flattening of
    (nx, ny, nz) grids: K[x, y] = Bx[xi, yi] * By[xj, yj] * Bz[xk, yk].
    """
    bx = band_matrix(weights_xyz[0], shape[0])
    by = band_matrix(weights_xyz[1], shape[1])
    bz = band_matrix(weights_xyz[2], shape[2])
    return np.kron(bx, np.kron(by, bz))


def kernel_column(weights_xyz, shape, target):
    """One column of kernel_matrix as a (nx, ny, nz) array: K[., target]."""
    bx = band_matrix(weights_xyz[0], shape[0])[:, target[0]]
    by = band_matrix(weights_xyz[1], shape[1])[:, target[1]]
    bz = band_matrix(weights_xyz[2], shape[2])[:, target[2]]
    return bx[:, None, None] * by[None, :, None] * bz[None, None, :]


def brute_pet_energy(pet, u, f1, f2, weights_xyz, voxel_volume):
    """Direct double sum over (x, y) voxel pairs of the local-fitting energy.

    E = voxvol * sum_x sum_y K[x,y] * ( u(x) (pet(x)-f1(y))^2
                                      + (1-u(x)) (pet(x)-f2(y))^2 )
    """
    shape = pet.shape
    n = pet.size
    kmat = kernel_matrix(weights_xyz, shape)
    p = pet.reshape(n)
    uu = u.reshape(n).astype(np.float64)
    g1 = f1.reshape(n)
    g2 = f2.reshape(n)
    total = 0.0
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        d1 = (p[lo:hi, None] - g1[None, :]) ** 2
        d2 = (p[lo:hi, None] - g2[None, :]) ** 2
        krows = kmat[lo:hi]
        total += float(np.sum(krows * (uu[lo:hi, None] * d1 + (1.0 - uu[lo:hi, None]) * d2)))
    return voxel_volume * total


def brute_local_fit_at(pet, u, weights_xyz, target, eps=0.0):
    """Energy-optimal (f1, f2) at one voxel, from the dense kernel column.

    ``eps`` reproduces the solver's division guard; leave it 0 for the pure
    optimum (then only trust points with healthy denominators).
    """
    col = kernel_column(weights_xyz, pet.shape, target)
    uu = u.astype(np.float64)
    num1 = float(np.sum(col * uu * pet))
    den1 = float(np.sum(col * uu))
    num2 = float(np.sum(col * (1.0 - uu) * pet))
    den2 = float(np.sum(col * (1.0 - uu)))
    return num1 / (den1 + eps), num2 / (den2 + eps)


def boundary_voxels(mask, spacing):
    """Brute-force 6-connectivity boundary with exposed-face-area weights.

    Returns (indices list in C scan order, weights mm^2 array). The volume
    border counts as background.
    """
    nx, ny, nz = mask.shape
    sx, sy, sz = spacing
    face_area = (sy * sz, sx * sz, sx * sy)
    idx = []
    weights = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not mask[i, j, k]:
                    continue
                exposed = 0.0
                for axis, (di, dj, dk) in enumerate(
                    [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
                ):
                    for sign in (-1, 1):
                        ni, nj, nk = i + sign * di, j + sign * dj, k + sign * dk
                        outside = not (0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz)
                        if outside or not mask[ni, nj, nk]:
                            exposed += face_area[axis]
                if exposed > 0.0:
                    idx.append((i, j, k))
                    weights.append(exposed)
    return idx, np.asarray(weights, dtype=np.float64)


def brute_surface_distances(a, b, spacing):
    """All-pairs exact surface distances between two masks.

    Returns (d_ab, w_a, d_ba, w_b): per-boundary-voxel min distances in mm
    (squared distances compared before the square root) and face-area
    weights, in C scan order.
    """
    idx_a, w_a = boundary_voxels(a, spacing)
    idx_b, w_b = boundary_voxels(b, spacing)
    pa = np.asarray(idx_a, dtype=np.float64) * np.asarray(spacing)
    pb = np.asarray(idx_b, dtype=np.float64) * np.asarray(spacing)
    sq = np.zeros((len(idx_a), len(idx_b)), dtype=np.float64)
    for axis in range(3):
        sq += (pa[:, axis : axis + 1] - pb[None, :, axis]) ** 2
    return np.sqrt(sq.min(axis=1)), w_a, np.sqrt(sq.min(axis=0)), w_b


def brute_nsd(a, b, spacing, tol_mm):
    """Brute-force normalized surface Dice from the all-pairs distances."""
    d_ab, w_a, d_ba, w_b = brute_surface_distances(a, b, spacing)
    hit = float(w_a[d_ab <= tol_mm].sum() + w_b[d_ba <= tol_mm].sum())
    return hit / float(w_a.sum() + w_b.sum())


def discrete_second_moment(weights):
    """Second moment sum_t w[t] * t^2 of centered 1-D taps."""
    radius = len(weights) // 2
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    return float(np.sum(weights * t * t))
