"""Mode catalog and the similarity transform that decouples a target mode."""
import logging

import numpy as np
import scipy.linalg

from .. import settings
from ..exceptions import EigenSolverError, ModeSelectionError, RepeatedModeError
from ..models import CanonicalSystem, Mode

logger = logging.getLogger(__name__)


def as_scalar(sigma):
    """Plain float for real modes so real models stay in real arithmetic."""
    sigma = complex(sigma)
    return sigma.real if sigma.imag == 0 else sigma


def norm_scale(A):
    scale = float(np.linalg.norm(A, 2)) if A.size else 0.0
    return scale if scale > 0 else 1.0


def modes(model, cluster_tol=settings.CLUSTER_TOL):
    """Eigenvalues of A grouped into multiplicity clusters, sorted by (real, imag)."""
    try:
        eigenvalues = scipy.linalg.eigvals(model.A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"Eigensolver failed on '{model.name}': {exc}") from exc

    tol = cluster_tol * norm_scale(model.A)
    clusters = []
    for value in sorted((complex(z) for z in eigenvalues), key=lambda z: (z.real, z.imag)):
        for cluster in clusters:
            if abs(value - cluster[0]) <= tol:
                cluster.append(value)
                break
        else:
            clusters.append([value])

    values = []
    for cluster in clusters:
        centre = complex(np.mean(cluster))
        if abs(centre.imag) <= tol:
            centre = complex(centre.real, 0.0)
        values.append((centre, len(cluster)))
    values.sort(key=lambda item: (item[0].real, item[0].imag))

    catalog = []
    for value, multiplicity in values:
        partner = None
        if value.imag != 0:
            for index, (other, _) in enumerate(values):
                if other.imag != 0 and abs(other - value.conjugate()) <= tol:
                    partner = index
                    break
        catalog.append(Mode(value=value, multiplicity=multiplicity, conjugate_index=partner))

    logger.debug(f"Mode catalog for '{model.name}': {[m.value for m in catalog]}")
    return catalog


def match_mode(catalog, sigma, tol):
    """Nearest catalog mode within ``tol`` of ``sigma``; error when absent or ambiguous."""
    sigma = complex(sigma)
    hits = [mode for mode in catalog if abs(mode.value - sigma) <= tol]
    if not hits:
        nearest = min(catalog, key=lambda mode: abs(mode.value - sigma)).value if catalog else None
        raise ModeSelectionError(f"{sigma} is not an eigenvalue of A (nearest mode {nearest})")
    if len(hits) > 1:
        raise ModeSelectionError(
            f"Mode selector {sigma} is ambiguous: {[mode.value for mode in hits]} are all within {tol:g}"
        )
    return hits[0]


def _decoupled_state(A, sigma, tol):
    for k in range(A.shape[0]):
        if abs(A[k, k] - sigma) > tol:
            continue
        if not np.any(np.delete(A[k, :], k)) and not np.any(np.delete(A[:, k], k)):
            return k
    return None


def _schur_transform(A, sigma, tol):
    n = A.shape[0]
    real = np.isrealobj(A) and sigma.imag == 0
    if real:
        others_first = lambda re, im: abs(complex(re, im) - sigma) > tol
        sigma_first = lambda re, im: abs(complex(re, im) - sigma) <= tol
        output = 'real'
    else:
        A = A.astype(np.complex128)
        others_first = lambda z: abs(z - sigma) > tol
        sigma_first = lambda z: abs(z - sigma) <= tol
        output = 'complex'

    try:
        _, Q_rest, sdim_rest = scipy.linalg.schur(A, output=output, sort=others_first)
        U_sigma, Q_sigma, sdim_sigma = scipy.linalg.schur(A, output=output, sort=sigma_first)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"Ordered Schur form failed for sigma={sigma}: {exc}") from exc
    if sdim_rest != n - 1 or sdim_sigma != 1:
        raise RepeatedModeError(f"sigma={sigma} is not a simple eigenvalue (Schur split {sdim_sigma}/{sdim_rest})")

    v = Q_sigma[:, 0]
    pivot = v[np.argmax(np.abs(v))]
    v = v * (abs(pivot) / pivot)
    T = np.column_stack([v, Q_rest[:, :n - 1]])
    T_inv = scipy.linalg.inv(T)
    T_inv[0, :] /= T_inv[0, :] @ v
    return T, T_inv, complex(U_sigma[0, 0])


def canonicalize(model, sigma, cluster_tol=settings.CLUSTER_TOL):
    """Similarity transform putting ``sigma`` at (1,1) and decoupling it from the rest of A."""
    catalog = modes(model, cluster_tol)
    tol = cluster_tol * norm_scale(model.A)
    mode = match_mode(catalog, sigma, tol)
    if mode.multiplicity > 1:
        raise RepeatedModeError(f"Mode {mode.value} has multiplicity {mode.multiplicity}; it must be simple")

    A = model.A
    k = _decoupled_state(A, mode.value, tol)
    if k is not None:
        order = [k] + [i for i in range(model.n) if i != k]
        T = np.eye(model.n)[:, order]
        A_canon = A[np.ix_(order, order)]
        return CanonicalSystem(
            sigma=complex(A[k, k]),
            A_tilde=A_canon[1:, 1:],
            B_tilde=model.B[order, :],
            C_tilde=model.C[:, order],
            D_tilde=model.D.copy(),
            T=T,
            T_inv=T.T.copy(),
            partition=model.partition,
        )

    T, T_inv, sigma_value = _schur_transform(A, mode.value, tol)
    A_canon = T_inv @ A @ T
    logger.debug(
        f"Canonicalized sigma={sigma_value} | coupling residual "
        f"{max(np.abs(A_canon[0, 1:]).max(initial=0.0), np.abs(A_canon[1:, 0]).max(initial=0.0)):.2e}"
    )
    return CanonicalSystem(
        sigma=sigma_value if mode.value.imag != 0 else complex(sigma_value.real, 0.0),
        A_tilde=A_canon[1:, 1:],
        B_tilde=T_inv @ model.B,
        C_tilde=model.C @ T,
        D_tilde=model.D.copy(),
        T=T,
        T_inv=T_inv,
        partition=model.partition,
    )
