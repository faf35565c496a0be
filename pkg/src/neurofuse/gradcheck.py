"""Central finite-difference verification of analytic gradients.

``check_gradients`` perturbs every entry of every input by +-h and
compares the resulting numeric derivative against the adjoint from a
backward pass.  The registry at the bottom maps op/block names to
self-contained checks; ``run_all`` drives them and is what the
``neurofuse gradcheck`` command executes.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """abs error scaled by max(1, |analytic|, |numeric|) per entry."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of f w.r.t. x, mutating x in place entry by entry."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return g


def check_gradients(
    build: Callable[[], Tensor], inputs: Iterable[Tensor], h: float = 1e-5
) -> float:
    """Max relative error over all ``inputs`` of d(build())/d(input).

    ``build`` must construct a fresh graph from the current input values and
    return a scalar loss tensor.
    """
    inputs = list(inputs)
    for t in inputs:
        t.zero_grad()
    loss = build()
    loss.backward()
    analytic = [t.grad.copy() for t in inputs]

    def value() -> float:
        with ad.no_grad():
            return build().item()

    worst = 0.0
    for t, a in zip(inputs, analytic):
        n = numeric_gradient(value, t.data, h=h)
        worst = max(worst, max_rel_error(a, n))
    return worst


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, Callable[[np.random.Generator], float]] = {}


def register(name: str):
    def deco(fn):
        _REGISTRY[name] = fn
        return fn

    return deco


def registered_checks() -> dict[str, Callable[[np.random.Generator], float]]:
    return dict(_REGISTRY)


def run_all(
    seed: int = 0,
    tolerance: float = 1e-4,
    names: Iterable[str] | None = None,
    report: Callable[[str], None] = print,
) -> bool:
    """Run every registered check; report one line per op; True iff all pass."""
    selected = list(names) if names is not None else sorted(_REGISTRY)
    ok = True
    for name in selected:
        rng = np.random.default_rng(seed)
        err = _REGISTRY[name](rng)
        passed = err <= tolerance
        ok = ok and passed
        report(f"{'PASS' if passed else 'FAIL'}  {name:32s} max_rel_err={err:.3e}")
    return ok


def _rand(rng, *shape, lo=-1.0, hi=1.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


@register("add")
def _check_add(rng):
    a, b = _rand(rng, 3, 4), _rand(rng, 3, 4)
    bias = _rand(rng, 1, 4)
    return check_gradients(lambda: ad.mean(ad.add(ad.add(a, b), bias)), [a, b, bias])


@register("sub")
def _check_sub(rng):
    a, b = _rand(rng, 3, 4), _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.sub(a, b)), [a, b])


@register("mul")
def _check_mul(rng):
    a, b = _rand(rng, 3, 4), _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.mul(a, b)), [a, b])


@register("div")
def _check_div(rng):
    a = _rand(rng, 3, 4)
    b = Tensor(rng.uniform(0.5, 1.5, size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.mean(ad.div(a, b)), [a, b])


@register("scale")
def _check_scale(rng):
    a = _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.scale(a, 2.5)), [a])


@register("matmul")
def _check_matmul(rng):
    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    return check_gradients(lambda: ad.mean(ad.matmul(a, b)), [a, b])


@register("transpose")
def _check_transpose(rng):
    a = _rand(rng, 3, 4)
    w = _rand(rng, 3, 2)
    return check_gradients(lambda: ad.mean(ad.matmul(ad.transpose(a), w)), [a, w])


@register("concat")
def _check_concat(rng):
    a, b = _rand(rng, 3, 2), _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.mul(ad.concat([a, b], axis=1), ad.concat([a, b], axis=1))), [a, b])


@register("slice")
def _check_slice(rng):
    a = _rand(rng, 4, 5)
    return check_gradients(lambda: ad.mean(ad.slice_axis(a, 1, 1, 4)), [a])


@register("reshape")
def _check_reshape(rng):
    a = _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.mul(ad.reshape(a, (2, 6)), ad.reshape(a, (2, 6)))), [a])


@register("sigmoid")
def _check_sigmoid(rng):
    a = _rand(rng, 3, 4, lo=-2, hi=2)
    return check_gradients(lambda: ad.mean(ad.sigmoid(a)), [a])


@register("tanh")
def _check_tanh(rng):
    a = _rand(rng, 3, 4, lo=-2, hi=2)
    return check_gradients(lambda: ad.mean(ad.tanh(a)), [a])


@register("relu")
def _check_relu(rng):
    # keep entries away from the kink, where finite differences are invalid
    a = Tensor(rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.mean(ad.relu(a)), [a])


@register("leaky_relu")
def _check_leaky_relu(rng):
    a = Tensor(rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.mean(ad.leaky_relu(a, 0.2)), [a])


@register("log")
def _check_log(rng):
    a = Tensor(rng.uniform(0.3, 2.0, size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.mean(ad.log(a)), [a])


@register("exp")
def _check_exp(rng):
    a = _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.exp(a)), [a])


@register("sqrt")
def _check_sqrt(rng):
    a = Tensor(rng.uniform(0.3, 2.0, size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.mean(ad.sqrt(a)), [a])


@register("clamp")
def _check_clamp(rng):
    a = Tensor(rng.uniform(0.2, 0.8, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.mean(ad.clamp(a, -0.5, 0.5)), [a])


@register("sum")
def _check_sum(rng):
    a = _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.mul(ad.sum_all(a, axis=0), ad.sum_all(a, axis=0))), [a])


@register("mean")
def _check_mean(rng):
    a = _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.mul(a, a)), [a])


@register("abs_sum")
def _check_abs_sum(rng):
    a = Tensor(rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)), requires_grad=True)
    return check_gradients(lambda: ad.abs_sum(a), [a])


@register("softmax_rows")
def _check_softmax(rng):
    a = _rand(rng, 3, 4, lo=-2, hi=2)
    w = _rand(rng, 3, 4)
    return check_gradients(lambda: ad.mean(ad.mul(ad.softmax_rows(a), w)), [a, w])


@register("conv2d")
def _check_conv2d(rng):
    x = _rand(rng, 2, 8, 8)
    w = _rand(rng, 3, 2, 3, 3)
    return check_gradients(lambda: ad.mean(ad.conv2d(x, w, stride=2, padding=0)), [x, w])


@register("conv2d_padded")
def _check_conv2d_padded(rng):
    x = _rand(rng, 2, 6, 6)
    w = _rand(rng, 2, 2, 3, 3)
    return check_gradients(lambda: ad.mean(ad.mul(ad.conv2d(x, w, stride=1, padding=1), ad.conv2d(x, w, stride=1, padding=1))), [x, w])


@register("avg_pool2d")
def _check_avg_pool(rng):
    x = _rand(rng, 2, 6, 6)
    return check_gradients(lambda: ad.mean(ad.mul(ad.avg_pool2d(x, 2), ad.avg_pool2d(x, 2))), [x])


@register("gather_pixels")
def _check_gather(rng):
    x = _rand(rng, 3, 5, 5)
    rows = rng.integers(0, 5, size=4)
    cols = rng.integers(0, 5, size=4)
    w = _rand(rng, 4, 3)
    return check_gradients(lambda: ad.mean(ad.mul(ad.gather_pixels(x, rows, cols), w)), [x, w])


# ---------------------------------------------------------------------------
# composed network blocks (imported lazily to keep module load light)
# ---------------------------------------------------------------------------


def _toy_atlas(rng, n):
    from .data import RoiAtlas

    return RoiAtlas(
        x=rng.uniform(0.1, 0.9, n),
        y=rng.uniform(0.1, 0.9, n),
        z=rng.uniform(0, 1, n),
        v=rng.uniform(0.5, 1.5, n),
    )


@register("block_extractor")
def _check_extractor(rng):
    from . import embedding

    params = embedding.init_extractor(rng, embed_dim=8, channels=(2, 2, 2, 2))
    volume = Tensor(rng.uniform(0, 1, (1, 16, 16)), requires_grad=True)
    atlas = _toy_atlas(rng, 4)
    weights = Tensor(rng.uniform(-1, 1, (4, 8)))
    inputs = [volume] + list(ad.collect_parameters(params).values())
    return check_gradients(lambda: ad.mean(ad.mul(embedding.extract(volume, atlas, params), weights)), inputs, h=1e-6)


def _toy_generator(rng, mode):
    from . import generator

    cfg = generator.GeneratorConfig(n_layers=2, heads=2, dim=4, attention_mode=mode, ffm_hidden=6)
    return cfg, generator.init_generator(rng, cfg)


@register("block_sbm_layer_swap")
def _check_sbm_swap(rng):
    from . import generator

    cfg, layers = _toy_generator(rng, "swap")
    s = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
    f = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
    inputs = [s, f] + list(ad.collect_parameters(layers[0]).values())

    def build():
        s1, f1 = generator.sbm_layer(s, f, layers[0], cfg)
        return ad.mean(ad.add(ad.mul(s1, s1), ad.mul(f1, f1)))

    return check_gradients(build, inputs, h=1e-6)


@register("block_sbm_layer_self")
def _check_sbm_self(rng):
    from . import generator

    cfg, layers = _toy_generator(rng, "self")
    s = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
    f = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
    inputs = [s, f] + list(ad.collect_parameters(layers[0]).values())

    def build():
        s1, f1 = generator.sbm_layer(s, f, layers[0], cfg)
        return ad.mean(ad.add(ad.mul(s1, s1), ad.mul(f1, f1)))

    return check_gradients(build, inputs, h=1e-6)


@register("block_connectivity")
def _check_connectivity(rng):
    from . import generator

    cfg, layers = _toy_generator(rng, "swap")
    s = Tensor(rng.uniform(-1, 1, (4, 4)), requires_grad=True)
    f = Tensor(rng.uniform(-1, 1, (4, 4)), requires_grad=True)
    inputs = [s, f] + list(ad.collect_parameters(layers).values())
    return check_gradients(lambda: ad.mean(generator.generate_mc(s, f, cfg, layers)[0].values), inputs, h=1e-6)


@register("block_cross_conv")
def _check_cross_conv(rng):
    from . import separator

    filters = separator.init_cross_filter(rng, c_out=2, c_in=2, n=5)
    x = Tensor(rng.uniform(-1, 1, (2, 5, 5)), requires_grad=True)
    inputs = [x] + list(ad.collect_parameters(filters).values())
    return check_gradients(lambda: ad.mean(ad.mul(separator.cross_conv(x, filters), separator.cross_conv(x, filters))), inputs, h=1e-6)


@register("block_separator")
def _check_separator(rng):
    from .data import ConnectivityMatrix
    from . import separator

    params = separator.init_separator(rng, n=6, c1=2, c2=2)
    mc = Tensor(rng.uniform(-1, 1, (6, 6)), requires_grad=True)
    inputs = [mc] + list(ad.collect_parameters(params).values())

    def build():
        sc_hat, fc_hat = separator.separate(ConnectivityMatrix(mc, "MC"), params)
        return ad.add(ad.abs_sum(sc_hat.values), ad.abs_sum(fc_hat.values))

    return check_gradients(build, inputs, h=1e-6)


@register("block_discriminator")
def _check_discriminator(rng):
    from . import discriminator

    params = discriminator.init_sub_discriminator(rng, n=8)
    x = Tensor(rng.uniform(0, 1, (8, 8)), requires_grad=True)
    inputs = [x] + list(ad.collect_parameters(params).values())
    return check_gradients(lambda: ad.log(discriminator.discriminate(x, params)), inputs, h=1e-6)


@register("block_predictor")
def _check_predictor(rng):
    from .data import ConnectivityMatrix
    from . import predictor, training

    params = predictor.init_predictor(rng, n=8, n_classes=2)
    mc = Tensor(rng.uniform(-1, 1, (8, 8)), requires_grad=True)
    inputs = [mc] + list(ad.collect_parameters(params).values())

    def build():
        probs = predictor.predict(ConnectivityMatrix(mc, "MC"), params, 2)
        return training.classification_loss(probs, 1)

    return check_gradients(build, inputs, h=1e-6)


@register("loss_adversarial")
def _check_loss_adversarial(rng):
    from . import discriminator, training

    d_s = discriminator.init_sub_discriminator(rng, n=6)
    d_f = discriminator.init_sub_discriminator(rng, n=6)
    real_sc = Tensor(rng.uniform(0, 1, (6, 6)))
    real_fc = Tensor(rng.uniform(-1, 1, (6, 6)))
    sc_hat = Tensor(rng.uniform(0, 1, (6, 6)), requires_grad=True)
    fc_hat = Tensor(rng.uniform(-1, 1, (6, 6)), requires_grad=True)
    inputs = [sc_hat, fc_hat] + list(ad.collect_parameters(d_s).values()) + list(
        ad.collect_parameters(d_f).values()
    )

    def build():
        adv_sc, adv_fc = training.adversarial_losses(d_s, d_f, real_sc, real_fc, sc_hat, fc_hat)
        return ad.add(adv_sc, adv_fc)

    return check_gradients(build, inputs, h=1e-6)


@register("loss_generator_nonsaturating")
def _check_loss_gen_ns(rng):
    from . import discriminator, training

    d = discriminator.init_sub_discriminator(rng, n=6)
    fake = Tensor(rng.uniform(0, 1, (6, 6)), requires_grad=True)
    inputs = [fake] + list(ad.collect_parameters(d).values())
    return check_gradients(lambda: training.generator_adversarial_term(d, fake, non_saturating=True), inputs, h=1e-6)


@register("loss_generator_minimax")
def _check_loss_gen_mm(rng):
    from . import discriminator, training

    d = discriminator.init_sub_discriminator(rng, n=6)
    fake = Tensor(rng.uniform(0, 1, (6, 6)), requires_grad=True)
    inputs = [fake] + list(ad.collect_parameters(d).values())
    return check_gradients(lambda: training.generator_adversarial_term(d, fake, non_saturating=False), inputs, h=1e-6)


@register("loss_classification")
def _check_loss_classification(rng):
    from . import training

    logits = Tensor(rng.uniform(-1, 1, (1, 3)), requires_grad=True)

    def build():
        probs = ad.reshape(ad.softmax_rows(logits), (3,))
        return training.classification_loss(probs, 2)

    return check_gradients(build, [logits])


@register("loss_reconstruction")
def _check_loss_reconstruction(rng):
    from . import training

    sc_hat = Tensor(rng.uniform(0, 1, (5, 5)), requires_grad=True)
    fc_hat = Tensor(rng.uniform(-1, 1, (5, 5)), requires_grad=True)
    sc = Tensor(rng.uniform(0, 1, (5, 5)))
    fc = Tensor(rng.uniform(-1, 1, (5, 5)))

    def build():
        l1_sc, l1_fc = training.reconstruction_losses(sc_hat, fc_hat, sc, fc)
        return ad.add(l1_sc, l1_fc)

    return check_gradients(build, [sc_hat, fc_hat])
