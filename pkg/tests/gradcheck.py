"""Central finite-difference oracle shared by the gradient tests."""
import numpy as np


def numeric_grad(f, arr, h=1e-3):
    """d f() / d arr by central differences; ``arr`` is perturbed in place and restored."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic, numeric):
    """Largest absolute discrepancy relative to the largest gradient magnitude."""
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-12)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def check_layer(layer, x, rng, h=1e-3, train=False, mask_seed=None):
    """Max relative error over the input and every parameter of ``layer``.

    The scalar objective is a fixed random projection of the layer output.
    """
    def fwd():
        r = None if mask_seed is None else np.random.default_rng(mask_seed)
        return layer.forward(x, train, r)

    out = fwd()
    proj = rng.normal(size=np.shape(out))
    gin, pgrads = layer.backward(proj)
    loss = lambda: float(np.sum(fwd() * proj))
    errs = {}
    if isinstance(x, list):
        for i, (xi, gi) in enumerate(zip(x, gin)):
            errs[f"x{i}"] = max_rel_error(gi, numeric_grad(loss, xi, h))
    else:
        errs["x"] = max_rel_error(gin, numeric_grad(loss, x, h))
    for name, value in layer.params.items():
        errs[name] = max_rel_error(pgrads[name], numeric_grad(loss, value, h))
    return errs


def check_model(model, inputs, targets, h=1e-3, names=None):
    """Relative error of MSE gradients for every (or the named) model parameter."""
    from hitsong.nn import mse_grad, mse_loss

    pred = model.forward(inputs, mode="eval")
    grads = model.backward(mse_grad(pred, targets))
    loss = lambda: mse_loss(model.forward(inputs, mode="eval"), targets)
    params = dict(model.parameters())
    errs = {}
    for name in names or params:
        arr = params[name]
        if arr.ndim == 0:
            holder = arr.reshape(1).copy()

            def f(holder=holder, name=name):
                model.set_parameter(name, holder[0])
                return loss()

            num = numeric_grad(f, holder, h)
            model.set_parameter(name, arr)
            errs[name] = max_rel_error(grads[name].reshape(1), num)
        else:
            errs[name] = max_rel_error(grads[name], numeric_grad(loss, arr, h))
    return errs
