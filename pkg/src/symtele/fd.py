"""Central finite differences, used as the gradient oracle in checks."""
import numpy as np


def central_diff(f, x, step=1e-6):
    """Gradient of scalar ``f`` at ``x`` by central differences, coordinate by coordinate."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat, grad = x.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = f(x)
        flat[i] = keep - step
        down = f(x)
        flat[i] = keep
        grad[i] = (up - down) / (2.0 * step)
    return out


def rel_error(a, b, floor=1e-12):
    """``||a - b|| / max(||b||, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))
