"""Layout synthesis: box regression, conditional mask GAN, FCR
classifier, and the z-ordered compositor with a flat colorizer.

Boxes are predicted as sigmoid (cx, cy, w, h) with w, h floored at
1e-3, so emitted corners are always well ordered. Masks come from a
small generator trained against an LSGAN discriminator that also sees
the object class; its two hidden activations feed a feature-matching
term. The compositor paints larger objects first so smaller ones stay
visible on top.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .layers import Linear, Mlp, collect_params

EMBED_DIM = 128
MASK_SIDE = 32
MASK_PIXELS = MASK_SIDE * MASK_SIDE
LAYOUT_SIZE = 64
NUM_CLASSES = 8

LAMBDA_GIOU = 10.0
LAMBDA_BOX_L2 = 10.0
LAMBDA_MASK_MSE = 10.0
LAMBDA_MASK_ADV = 0.25
LAMBDA_MASK_FM = 10.0

# One distinct color per object class, then the two backgrounds.
PALETTE = np.array([
    (230, 70, 70),    # circle
    (250, 160, 40),   # triangle
    (160, 110, 60),   # house
    (40, 140, 60),    # tree
    (240, 220, 60),   # star
    (120, 80, 200),   # cross
    (60, 170, 220),   # arrow
    (220, 100, 180),  # ring
    (150, 210, 120),  # meadow background
    (170, 210, 245),  # sky background
], dtype=np.uint8)


def giou(a, b):
    """Generalized IoU of two corner boxes, in [-1, 1]."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    hull = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return inter / union - (hull - union) / hull


def giou_tensor(pred, target):
    """Per-row GIoU between predicted corner boxes and constant targets."""
    if pred.shape != np.shape(target):
        raise ad.ShapeError(f"giou: {pred.shape} vs {np.shape(target)}")
    t = ad.Tensor(np.asarray(target, dtype=np.float32))
    px0, py0, px1, py1 = (pred[:, i] for i in range(4))
    tx0, ty0, tx1, ty1 = (t[:, i] for i in range(4))
    iw = ad.relu(ad.minimum(px1, tx1) - ad.maximum(px0, tx0))
    ih = ad.relu(ad.minimum(py1, ty1) - ad.maximum(py0, ty0))
    inter = iw * ih
    union = (px1 - px0) * (py1 - py0) + (tx1 - tx0) * (ty1 - ty0) - inter
    hull = (ad.maximum(px1, tx1) - ad.minimum(px0, tx0)) * \
           (ad.maximum(py1, ty1) - ad.minimum(py0, ty0))
    return inter / union - (hull - union) / hull


class BoxGenerator:
    """2-layer MLP from FCR to a corner box."""

    def __init__(self, rng):
        self.mlp = Mlp(rng, [EMBED_DIM, 64, 4], hidden_act=ad.leaky_relu)

    @property
    def params(self):
        return self.mlp.params

    def boxes(self, fcr):
        out = ad.sigmoid(self.mlp(fcr))
        cx, cy = out[:, 0:1], out[:, 1:2]
        w = ad.clamp_min(out[:, 2:3], 1e-3)
        h = ad.clamp_min(out[:, 3:4], 1e-3)
        return ad.concat([cx - w * 0.5, cy - h * 0.5,
                          cx + w * 0.5, cy + h * 0.5], axis=1)


def box_loss(gen: BoxGenerator, fcr, target_boxes,
             l_giou=LAMBDA_GIOU, l_l2=LAMBDA_BOX_L2):
    """Mean GIoU loss plus L2 corner distance, weighted 10/10."""
    target = np.asarray(target_boxes, dtype=np.float32)
    if fcr.shape[0] != len(target):
        raise ad.ShapeError(f"box_loss: {fcr.shape[0]} vectors vs {len(target)} boxes")
    pred = gen.boxes(fcr)
    g = giou_tensor(pred, target)
    l2 = ad.l2_distance(pred, ad.Tensor(target))
    return (l_giou * (1.0 - g) + l_l2 * l2).mean()


class MaskGenerator:
    def __init__(self, rng):
        self.mlp = Mlp(rng, [EMBED_DIM, 256, MASK_PIXELS], hidden_act=ad.leaky_relu)

    @property
    def params(self):
        return self.mlp.params

    def masks(self, fcr):
        """Flat (n, 1024) masks in [0, 1]."""
        return ad.sigmoid(self.mlp(fcr))


class MaskDiscriminator:
    """Scores a mask conditioned on its one-hot class; exposes hidden
    activations for feature matching."""

    def __init__(self, rng, num_classes=NUM_CLASSES):
        self.l1 = Linear(rng, MASK_PIXELS + num_classes, 256)
        self.l2 = Linear(rng, 256, 64)
        self.l3 = Linear(rng, 64, 1)
        self.num_classes = num_classes

    @property
    def params(self):
        return collect_params(self.l1, self.l2, self.l3)

    def forward(self, masks, class_ids):
        onehot = np.zeros((masks.shape[0], self.num_classes), dtype=np.float32)
        onehot[np.arange(len(class_ids)), np.asarray(class_ids)] = 1.0
        x = ad.concat([masks, ad.Tensor(onehot)], axis=1)
        h1 = ad.leaky_relu(self.l1(x))
        h2 = ad.leaky_relu(self.l2(h1))
        return self.l3(h2)[:, 0], (h1, h2)


def lsgan_discriminator_loss(real_scores, fake_scores):
    """0.5 * [(D(real) - 1)^2 + D(fake)^2], batch-averaged."""
    ones = ad.Tensor(np.ones(real_scores.shape, dtype=np.float32))
    return 0.5 * (ad.squared_error(real_scores, ones).mean()
                  + (fake_scores * fake_scores).mean())


def feature_match_loss(real_feats, fake_feats):
    """Mean absolute activation gap, averaged over D's two hidden layers."""
    terms = [ad.absolute(r - f).mean() for r, f in zip(real_feats, fake_feats)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def mask_gan_losses(gen: MaskGenerator, disc: MaskDiscriminator, fcr, real_masks,
                    class_ids, l_mse=LAMBDA_MASK_MSE, l_adv=LAMBDA_MASK_ADV,
                    l_fm=LAMBDA_MASK_FM):
    """(generator loss, discriminator loss) for one FCR batch.

    The discriminator loss sees the generated masks detached, so the
    two graphs stay independent for alternating updates.
    """
    real = np.asarray(real_masks, dtype=np.float32).reshape(-1, MASK_PIXELS)
    if fcr.shape[0] != len(real) or len(real) != len(class_ids):
        raise ad.ShapeError(
            f"mask_gan_losses: {fcr.shape[0]} vectors, {len(real)} masks, "
            f"{len(class_ids)} labels")
    fake = gen.masks(fcr)
    real_t = ad.Tensor(real)
    real_score, real_feats = disc.forward(real_t, class_ids)
    fake_score, fake_feats = disc.forward(fake, class_ids)

    recon = ad.squared_error(fake, real_t).mean()
    adv = ad.squared_error(fake_score, ad.Tensor(np.ones(len(real), dtype=np.float32))).mean()
    fm = feature_match_loss([f.detach() for f in real_feats], fake_feats)
    gen_loss = l_mse * recon + l_adv * adv + l_fm * fm

    d_real, _ = disc.forward(real_t, class_ids)
    d_fake, _ = disc.forward(fake.detach(), class_ids)
    return gen_loss, lsgan_discriminator_loss(d_real, d_fake)


class FcrClassifier:
    def __init__(self, rng, num_classes=NUM_CLASSES):
        self.linear = Linear(rng, EMBED_DIM, num_classes)

    @property
    def params(self):
        return self.linear.params

    def __call__(self, fcr):
        return self.linear(fcr)


def fcr_cce(clf: FcrClassifier, fcr, class_ids):
    """Mean cross-entropy of the per-object FCR classifier."""
    return ad.cross_entropy_logits(clf(fcr), np.asarray(class_ids)).mean()


# -- composition -------------------------------------------------------


def compose_layout(boxes, masks, class_ids, background, size=LAYOUT_SIZE):
    """Paint masks into a class-id grid, larger boxes behind smaller.

    Equal areas put the lower object index in front. Masks may be float
    (thresholded at 0.5) or boolean, any square resolution.
    """
    layout = np.full((size, size), int(background), dtype=np.int64)
    areas = [(b[2] - b[0]) * (b[3] - b[1]) for b in boxes]
    # Paint back-to-front: big first; equal areas paint higher index
    # first so the lower index ends up visible.
    order = sorted(range(len(boxes)), key=lambda i: (-areas[i], -i))
    for i in order:
        x0, y0, x1, y1 = boxes[i]
        r0 = min(max(int(np.floor(y0 * size)), 0), size - 1)
        c0 = min(max(int(np.floor(x0 * size)), 0), size - 1)
        r1 = min(max(int(np.ceil(y1 * size)), r0 + 1), size)
        c1 = min(max(int(np.ceil(x1 * size)), c0 + 1), size)
        mask = np.asarray(masks[i])
        if mask.dtype != bool:
            mask = mask.reshape(MASK_SIDE, MASK_SIDE) >= 0.5
        mh, mw = mask.shape
        rows = np.minimum(((np.arange(r0, r1) - r0 + 0.5) * mh / (r1 - r0)).astype(int), mh - 1)
        cols = np.minimum(((np.arange(c0, c1) - c0 + 0.5) * mw / (c1 - c0)).astype(int), mw - 1)
        patch = mask[np.ix_(rows, cols)]
        region = layout[r0:r1, c0:c1]
        region[patch] = int(class_ids[i])
    return layout


def colorize(layout):
    """Map a class-id layout to RGB via the fixed palette."""
    grid = np.asarray(layout)
    if grid.min() < 0 or grid.max() >= len(PALETTE):
        raise ValueError(f"layout holds class id outside [0, {len(PALETTE)})")
    return PALETTE[grid]


def uncolorize(rgb):
    """Exact inverse of `colorize`."""
    flat = np.asarray(rgb).reshape(-1, 3)
    lookup = {tuple(c): i for i, c in enumerate(PALETTE)}
    try:
        ids = np.array([lookup[tuple(px)] for px in flat], dtype=np.int64)
    except KeyError as e:
        raise ValueError(f"color {e} not in palette") from None
    return ids.reshape(np.asarray(rgb).shape[:2])


def ppm_bytes(rgb) -> bytes:
    """Serialize an RGB array as binary PPM (P6)."""
    arr = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = arr.shape
    return f"P6\n{w} {h}\n255\n".encode() + arr.tobytes()


def write_ppm(path, rgb):
    with open(path, "wb") as f:
        f.write(ppm_bytes(rgb))
