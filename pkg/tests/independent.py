"""Reference computations written without the package's simulator or oracle."""
import numpy as np


def visitation_and_gradient(mdp, fm, pi, theta, n_chains=1000, n_steps=1000, burn_in=200, seed=0):
    """Run ``n_chains`` independent chains under the fixed policy table ``pi``.

    Returns per-chain means of the state-action visitation indicator and of
    the semi-gradient at ``theta``; shapes ``(n_chains, S, A)`` and
    ``(n_chains, N)``.
    """
    rng = np.random.default_rng(seed)
    S, A = pi.shape
    phi = fm.table
    q = phi @ theta
    x = rng.integers(0, S, n_chains)
    a = np.array([rng.choice(A, p=pi[s]) for s in x])
    visits = np.zeros((n_chains, S * A))
    grads = np.zeros((n_chains, fm.n_features))
    rows = np.arange(n_chains)
    cp = np.cumsum(mdp.kernel, axis=-1)
    ca = np.cumsum(pi, axis=-1)
    for t in range(burn_in + n_steps):
        y = np.minimum((rng.random(n_chains)[:, None] > cp[x, a]).sum(-1), S - 1)
        b = np.minimum((rng.random(n_chains)[:, None] > ca[y]).sum(-1), A - 1)
        if t >= burn_in:
            delta = mdp.rewards[x, a] + mdp.gamma * q[y, b] - q[x, a]
            grads += phi[x, a] * delta[:, None]
            visits[rows, x * A + a] += 1
        x, a = y, b
    return visits.reshape(n_chains, S, A) / n_steps, grads / n_steps


def policy_evaluation(mdp, pi, tol=1e-13):
    """Iterative Bellman evaluation of Q^pi."""
    q = np.zeros_like(mdp.rewards)
    while True:
        v = (pi * q).sum(axis=1)
        new = mdp.rewards + mdp.gamma * mdp.kernel @ v
        if np.abs(new - q).max() < tol:
            return new
        q = new
