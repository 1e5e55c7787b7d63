"""Loss assembly and the training loop.

The total objective is

    global + alpha * corner + beta * gradient_norm + gamma_reg * ||z||_2

evaluated over one glyph's sample set per optimizer step.  During warm-up
the anti-alias range anneals log-linearly from the full field range down
to aa_k / train_width while the channel composition is the plain mean;
afterwards it switches to the median-pair surrogate.  Ground-truth rasters
and sample sets are rebuilt whenever the anti-alias range changes so the
prediction and target always share the same blur scale.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodecoder as ad
from . import geometry, sampling, templates as templates_mod
from .errors import NumericalError
from .field import compose_train_grad, kernel, kernel_grad
from .sampling import SampleConfig, sample_glyph


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.01
    gamma_reg: float = 1e-4

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma_reg) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class WarmupSchedule:
    """Log-linear anneal of the anti-alias range, mean composer while hot."""

    gamma_end: float
    gamma_start: float = 1.0
    anneal_epochs: int = 0

    def gamma(self, epoch):
        if self.anneal_epochs <= 0 or epoch >= self.anneal_epochs:
            return self.gamma_end
        frac = epoch / self.anneal_epochs
        return self.gamma_start * (self.gamma_end / self.gamma_start) ** frac

    def composer(self, epoch):
        if self.anneal_epochs > 0 and epoch < self.anneal_epochs:
            return "mean"
        return "median_pair"


@dataclass
class LossTerms:
    total: float
    global_: float
    local: float
    grad: float
    latent_norm: float


def loss_global(pred_composed, targets):
    """Mean squared error of the composed prediction against the targets."""
    r = pred_composed - targets
    return float(np.mean(r * r))


def loss_eikonal(grad_xy):
    """One-sided unit-gradient penalty.

    ``grad_xy`` has shape (k, n, 2): spatial gradient of each channel at k
    points.  Contributions are |1 - ||g||| where ||g|| < 1, else 0, averaged
    over points and channels.
    """
    g = np.asarray(grad_xy, dtype=np.float64)
    norm = np.sqrt(np.einsum("knc,knc->kn", g, g))
    short = np.where(norm < 1.0, 1.0 - norm, 0.0)
    return float(np.mean(short))


def total_loss(
    net_config,
    params,
    z,
    label,
    sample_set,
    templates,
    *,
    gamma,
    composer,
    weights,
    supervision="sdf",
    train_width=64,
    eikonal_rows=None,
    need_param_grads=True,
):
    """All loss terms plus exact gradients w.r.t. the parameters and z.

    Returns (terms, param_grads, dz).  ``eikonal_rows`` selects which
    sample rows carry the finite-difference stencil (all rows when None);
    the stencil step is 1 / (2 * train_width) and gradients flow through
    its forward evaluations.  With alpha = beta = gamma_reg = 0 the total
    equals the global term exactly.
    """
    n_ch = net_config.out_channels
    N = len(sample_set)
    if supervision != "sdf" or weights.beta == 0 or N == 0:
        eik = np.zeros(0, dtype=np.int64)
    elif eikonal_rows is None:
        eik = np.arange(N)
    else:
        eik = np.asarray(eikonal_rows, dtype=np.int64)
    k = len(eik)

    h = 1.0 / (2.0 * train_width)
    pts = sample_set.positions
    if k:
        stencil = np.concatenate(
            [
                pts[eik] + np.array([h, 0.0]),
                pts[eik] - np.array([h, 0.0]),
                pts[eik] + np.array([0.0, h]),
                pts[eik] - np.array([0.0, h]),
            ]
        )
        all_pts = np.concatenate([pts, stencil])
    else:
        all_pts = pts

    X = ad.assemble_inputs(all_pts, label, z, net_config.alphabet_size)
    out, cache = ad.forward(net_config, params, X)

    d_out = np.zeros_like(out)
    center = out[:N]

    # opacities per channel (identity in pixel-supervision mode)
    if supervision == "sdf":
        C = kernel(center, gamma)
    else:
        C = center

    # global term
    dC = np.zeros_like(C)
    g_loss = 0.0
    if N:
        composed, comp_grad = compose_train_grad(C, composer)
        residual = composed - sample_set.targets
        g_loss = float(np.mean(residual * residual))
        dC += (2.0 / N) * residual[:, None] * comp_grad

    # corner term
    local = 0.0
    if weights.alpha > 0 and templates and n_ch == 3:
        inv = 1.0 / len(templates)
        for tpl, rows in zip(templates, sample_set.template_rows):
            l_k, g_k = templates_mod.corner_loss_grad(C[rows], tpl, gamma)
            local += l_k * inv
            np.add.at(dC, rows, weights.alpha * inv * g_k)

    if supervision == "sdf":
        d_out[:N] += dC * kernel_grad(center, gamma)
    else:
        d_out[:N] += dC

    # gradient-norm term via the central stencil
    grad_term = 0.0
    if k:
        px = out[N : N + k]
        mx = out[N + k : N + 2 * k]
        py = out[N + 2 * k : N + 3 * k]
        my = out[N + 3 * k : N + 4 * k]
        gx = (px - mx) / (2.0 * h)
        gy = (py - my) / (2.0 * h)
        norm = np.sqrt(gx * gx + gy * gy)
        active = norm < 1.0
        grad_term = float(np.sum(np.where(active, 1.0 - norm, 0.0)) / (k * n_ch))
        safe = np.where(norm > 0, norm, 1.0)
        scale = np.where(active & (norm > 0), -1.0 / (k * n_ch), 0.0)
        dgx = scale * gx / safe
        dgy = scale * gy / safe
        coeff = weights.beta / (2.0 * h)
        d_out[N : N + k] += coeff * dgx
        d_out[N + k : N + 2 * k] -= coeff * dgx
        d_out[N + 2 * k : N + 3 * k] += coeff * dgy
        d_out[N + 3 * k : N + 4 * k] -= coeff * dgy

    latent_norm = float(np.linalg.norm(z))
    total = (
        g_loss
        + weights.alpha * local
        + weights.beta * grad_term
        + weights.gamma_reg * latent_norm
    )

    grads, dX = ad.backward(
        net_config, params, cache, d_out, need_param_grads=need_param_grads
    )
    dz = dX[:, 2 + net_config.alphabet_size :].sum(axis=0)
    if latent_norm > 0:
        dz = dz + weights.gamma_reg * z / latent_norm
    terms = LossTerms(total, g_loss, local, grad_term, latent_norm)
    return terms, grads, dz


# ---------------------------------------------------------------------------
# dataset preparation and the epoch loop


@dataclass
class PreparedGlyph:
    family_id: str
    family_index: int
    label: int
    glyph: object
    sdf: np.ndarray              # exact signed distance at train resolution
    templates: list

    @property
    def corners(self):
        return [t.corner for t in self.templates]


def prepare_glyph(glyph, family_id, family_index, label, field_settings):
    sdf = geometry.sdf_grid(glyph, field_settings.train_width)
    templates = templates_mod.build_templates(
        glyph, field_settings.train_width, field_settings.corner_threshold
    )
    return PreparedGlyph(family_id, family_index, label, glyph, sdf, templates)


class TrainingDiverged(NumericalError):
    def __init__(self, epoch, bundle):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch
        self.bundle = bundle


def _sample_seed(seed, glyph_index):
    return int(np.random.SeedSequence([seed, 1, glyph_index]).generate_state(1)[0])


def _glyph_cache(prepared, gamma, rho, min_h, seed, gi):
    image = kernel(prepared.sdf, gamma)
    cfg = SampleConfig(rho=rho, min_homogeneous=min_h, seed=_sample_seed(seed, gi))
    return sample_glyph(prepared.glyph, image, prepared.sdf, prepared.templates, gamma, cfg)


def _capped_view(samples, cap, rng):
    """Per-step subset: keep all corner-window rows, cap the rest.

    Returns a SampleSet sharing no rows semantics with the original (the
    template row indices are remapped into the subset).
    """
    from .sampling import SampleSet

    n = len(samples)
    window_rows = (
        np.unique(np.concatenate(samples.template_rows))
        if samples.template_rows
        else np.zeros(0, dtype=np.int64)
    )
    in_window = np.zeros(n, dtype=bool)
    in_window[window_rows] = True
    free = np.flatnonzero(~in_window)
    if len(free) <= cap:
        return samples
    keep_free = free[np.sort(rng.choice(len(free), cap, replace=False))]
    keep = np.sort(np.concatenate([window_rows, keep_free]))
    remap = np.full(n, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    return SampleSet(
        positions=samples.positions[keep],
        targets=samples.targets[keep],
        kinds=samples.kinds[keep],
        template_rows=[remap[rows] for rows in samples.template_rows],
        rng_seed=samples.rng_seed,
        gamma=samples.gamma,
    )


def train(
    dataset,
    alphabet,
    field_settings,
    train_settings,
    *,
    resume=None,
    progress=None,
):
    """Fit the network (and latent table) to a prepared dataset.

    Returns (bundle, log_rows).  ``resume`` continues from a loaded
    :class:`~glyphsdf.autodecoder.ModelBundle`; the schedule and all RNG
    streams are stateless functions of (seed, epoch, glyph), so a resumed
    run is bit-identical to an uninterrupted one.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    ts = train_settings
    fs = field_settings
    n_fam = max(p.family_index for p in dataset) + 1
    family_ids = [None] * n_fam
    for p in dataset:
        family_ids[p.family_index] = p.family_id

    anneal = ts.epochs // 2 if ts.anneal_epochs is None else ts.anneal_epochs
    schedule = WarmupSchedule(
        gamma_end=fs.aa_k / fs.train_width,
        gamma_start=ts.gamma_start,
        anneal_epochs=anneal,
    )
    weights = LossWeights(ts.alpha, ts.beta, ts.gamma_reg)

    if resume is not None:
        bundle = resume
        net = bundle.network
        params = bundle.params
        latents = bundle.latents
        adam = bundle.adam or ad.AdamState(lr=ts.lr)
        start_epoch = bundle.epoch
    else:
        net = ad.NetworkConfig(
            alphabet_size=len(alphabet),
            out_channels=fs.channels,
            hidden_layers=ts.hidden_layers,
            width=ts.hidden_width,
            skip_layer=min(3, ts.hidden_layers - 1),
        )
        params = ad.init_parameters(net, np.random.default_rng(np.random.SeedSequence([ts.seed, 10])))
        latents = ad.init_latents(
            family_ids, np.random.default_rng(np.random.SeedSequence([ts.seed, 11]))
        )
        adam = ad.AdamState(lr=ts.lr)
        start_epoch = 0

    deterministic = ts.threads == 1
    log_rows = []
    caches = [None] * len(dataset)
    last_gamma = None
    last_good = None

    for epoch in range(start_epoch, ts.epochs):
        gamma = schedule.gamma(epoch)
        composer = schedule.composer(epoch)
        if gamma != last_gamma:
            for gi, prepared in enumerate(dataset):
                caches[gi] = _glyph_cache(
                    prepared, gamma, ts.rho, ts.min_homogeneous, ts.seed, gi
                )
            last_gamma = gamma
        frozen = ts.freeze_epoch is not None and epoch >= ts.freeze_epoch
        latents.frozen = frozen

        order = np.random.default_rng(
            np.random.SeedSequence([ts.seed, 2, epoch])
        ).permutation(len(dataset))
        sums = np.zeros(5)
        t0 = time.perf_counter()
        for gi in order:
            prepared = dataset[gi]
            samples = caches[gi]
            if len(samples) == 0:
                continue
            step_rng = np.random.default_rng(
                np.random.SeedSequence([ts.seed, 3, epoch, int(gi)])
            )
            if ts.samples_cap is not None:
                samples = _capped_view(samples, ts.samples_cap, step_rng)
            n = len(samples)
            if ts.eikonal_ratio >= 1.0:
                eik = None
            elif ts.eikonal_ratio <= 0.0:
                eik = np.zeros(0, dtype=np.int64)
            else:
                k = max(1, round(ts.eikonal_ratio * n))
                eik = step_rng.choice(n, k, replace=False)
            z = latents.codes[prepared.family_index]
            terms, grads, dz = total_loss(
                net,
                params,
                z,
                prepared.label,
                samples,
                prepared.templates,
                gamma=gamma,
                composer=composer,
                weights=weights,
                supervision=ts.supervision,
                train_width=fs.train_width,
                eikonal_rows=eik,
            )
            if not np.isfinite(terms.total):
                raise TrainingDiverged(epoch, last_good)
            arrays = dict(params.named())
            grad_map = dict(grads.named())
            if not frozen:
                name = f"z{prepared.family_index}"
                arrays[name] = latents.codes[prepared.family_index]
                grad_map[name] = dz
            try:
                ad.adam_step(adam, arrays, grad_map)
            except NumericalError:
                raise TrainingDiverged(epoch, last_good) from None
            sums += (terms.total, terms.global_, terms.local, terms.grad, terms.latent_norm)
        wall_ms = 0.0 if deterministic else (time.perf_counter() - t0) * 1000.0
        means = sums / max(len(order), 1)
        log_rows.append(
            {
                "epoch": epoch,
                "gamma": gamma,
                "loss_total": means[0],
                "loss_global": means[1],
                "loss_local": means[2],
                "loss_grad": means[3],
                "latent_norm": float(np.mean(np.linalg.norm(latents.codes, axis=1))),
                "wall_ms": wall_ms,
            }
        )
        last_good = ad.ModelBundle(
            network=net,
            params=params.copy(),
            latents=ad.LatentTable(latents.codes.copy(), list(latents.family_ids), latents.frozen),
            alphabet=alphabet,
            channels=fs.channels,
            aa_k=fs.aa_k,
            train_width=fs.train_width,
            supervision=ts.supervision,
            epoch=epoch + 1,
        )
        if progress is not None:
            progress(epoch, log_rows[-1])

    bundle = ad.ModelBundle(
        network=net,
        params=params,
        latents=latents,
        alphabet=alphabet,
        channels=fs.channels,
        aa_k=fs.aa_k,
        train_width=fs.train_width,
        supervision=ts.supervision,
        epoch=ts.epochs,
        adam=adam,
    )
    return bundle, log_rows


def fit_latent(
    bundle,
    target_image,
    label,
    mask=None,
    *,
    lr=1e-2,
    steps=500,
    gamma_reg=1e-4,
    max_points=8192,
    seed=0,
):
    """Optimize a latent code so the rendered glyph matches a target raster.

    ``mask`` is an optional boolean array (True = ignored) aligned with the
    target; masked pixels contribute no loss and no gradient.  The network
    stays frozen; the code starts at the latent-table mean.  Returns
    (z, history) with per-step objective values.
    """
    img = np.asarray(target_image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("target image must be 2-D")
    height, width = img.shape
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != img.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match target {img.shape}"
            )
    if not 0 <= label < bundle.network.alphabet_size:
        raise ValueError(f"label {label} outside the alphabet")

    centers = geometry.pixel_centers(width, height).reshape(-1, 2)
    targets = img.reshape(-1)
    keep = np.ones(len(targets), dtype=bool) if mask is None else ~mask.reshape(-1)
    idx = np.flatnonzero(keep)
    if len(idx) > max_points:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
        idx = idx[np.sort(rng.choice(len(idx), max_points, replace=False))]
    pts = centers[idx]
    tgt = targets[idx]

    gamma = bundle.aa_k / width
    net = bundle.network
    params = bundle.params
    z = bundle.latents.mean_code().copy()
    adam = ad.AdamState(lr=lr)
    history = []
    for _ in range(steps):
        if len(pts):
            X = ad.assemble_inputs(pts, label, z, net.alphabet_size)
            out, cache = ad.forward(net, params, X)
            if bundle.supervision == "sdf":
                C = kernel(out, gamma)
            else:
                C = out
            composed, comp_grad = compose_train_grad(C, "median_pair")
            residual = composed - tgt
            loss = float(np.mean(residual * residual))
            dC = (2.0 / len(pts)) * residual[:, None] * comp_grad
            if bundle.supervision == "sdf":
                d_out = dC * kernel_grad(out, gamma)
            else:
                d_out = dC
            _, dX = ad.backward(net, params, cache, d_out, need_param_grads=False)
            dz = dX[:, 2 + net.alphabet_size :].sum(axis=0)
        else:
            loss = 0.0
            dz = np.zeros_like(z)
        znorm = float(np.linalg.norm(z))
        if znorm > 0:
            dz = dz + gamma_reg * z / znorm
        history.append(loss + gamma_reg * znorm)
        ad.adam_step(adam, {"z": z}, {"z": dz})
    return z, history
