"""Training loop, evaluation tables, and the ablation driver.

Determinism contract: everything random is keyed on (config seed, global
step, sample index), so a fixed seed reproduces the dataset order, the
augmentations, and the whole training trajectory; resuming from a
checkpoint continues the identical schedule.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import (Checkpoint, load_model_arrays, load_optimizer_arrays,
                         state_to_arrays)
from .config import TrainConfig
from .data import Dataset, augment_pair
from .losses import (LOSS_MODES, ContrastiveTriplet, CurriculumSchedule, cr_loss,
                     joint_loss, make_extractor, masked_l1, sgcr_loss)
from .metrics import psnr, ssim
from .model import AblationVariant, build_model

_BATCH_STREAM = 7919
_AUG_STREAM = 104729


def _batch_indices(n: int, batch_size: int, seed: int, step: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _BATCH_STREAM, step])
    return rng.choice(n, size=min(batch_size, n), replace=False)


def _to_batch(dataset: Dataset, indices, seed: int, step: int,
              cfg: TrainConfig, augment: bool):
    xs_m, xs_gt, xs_l, masks = [], [], [], []
    for i in indices:
        pair = dataset[int(i)]
        arrays = [pair.x_m, pair.x_gt, pair.x_l, pair.mask_i]
        if augment and (cfg.augment_rotate or cfg.augment_transpose):
            rng = np.random.default_rng([seed, _AUG_STREAM, step, int(i)])
            arrays = augment_pair(arrays, rng, cfg.augment_rotate,
                                  cfg.augment_transpose)
        xs_m.append(arrays[0])
        xs_gt.append(arrays[1])
        xs_l.append(arrays[2])
        masks.append(arrays[3])

    def stack(arrs):
        return torch.from_numpy(np.stack(arrs)[:, None].astype(np.float32))

    return stack(xs_m), stack(xs_gt), stack(xs_l), stack(masks)


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)

    def append(self, **kwargs):
        self.records.append(dict(kwargs))

    def to_csv(self, path):
        if not self.records:
            return
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.records[0]))
            writer.writeheader()
            writer.writerows(self.records)


def _holdout_split(n: int, fraction: float) -> tuple[list[int], list[int]]:
    if n < 5 or fraction <= 0:
        return list(range(n)), []
    k = max(1, int(round(fraction * n)))
    return list(range(n - k)), list(range(n - k, n))


@torch.no_grad()
def _mean_psnr(model, dataset: Dataset, indices) -> float:
    model.eval()
    vals = []
    for i in indices:
        pair = dataset[int(i)]
        xm = torch.from_numpy(pair.x_m[None, None].astype(np.float32))
        xl = torch.from_numpy(pair.x_l[None, None].astype(np.float32))
        mask = torch.from_numpy(pair.mask_i[None, None].astype(np.float32))
        out, _ = model(xm, xl, mask)
        vals.append(psnr(np.clip(out[0, 0].numpy(), 0, 1), pair.x_gt))
    model.train()
    return float(np.mean(vals))


def train(model, dataset: Dataset, cfg: TrainConfig,
          resume: Checkpoint | None = None) -> tuple[Checkpoint, TrainLog]:
    """Optimize the joint objective; returns the final checkpoint and log.

    Aborts with a diagnostic naming the offending batch if the loss goes
    non-finite. ``resume`` continues the identical step schedule from a
    previous checkpoint.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    torch.manual_seed(cfg.seed)
    extractor = (make_extractor(cfg.extractor)
                 if cfg.loss_mode != "none" and cfg.lambda_g > 0 else None)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                                 betas=(cfg.adam_beta1, cfg.adam_beta2))
    start_step = 0
    if resume is not None:
        load_model_arrays(model, resume.arrays)
        load_optimizer_arrays(model, optimizer, resume.arrays)
        start_step = resume.step

    train_idx, holdout_idx = _holdout_split(len(dataset), cfg.holdout_fraction)
    steps_per_epoch = max(1, math.ceil(len(train_idx) / cfg.batch_size))
    total_steps = cfg.max_steps or cfg.epochs * steps_per_epoch
    schedule = CurriculumSchedule(cfg.mu_start, cfg.mu_end, cfg.epochs)

    log = TrainLog()
    model.train()
    for step in range(start_step, total_steps):
        epoch = step // steps_per_epoch
        mu = schedule.mu_at(min(epoch, cfg.epochs))
        indices = _batch_indices(len(train_idx), cfg.batch_size, cfg.seed, step)
        batch_ids = [train_idx[i] for i in indices]
        xm, xgt, xl, mask = _to_batch(dataset, batch_ids, cfg.seed, step, cfg,
                                      augment=True)

        optimizer.zero_grad()
        u_final, u0 = model(xm, xl, mask)
        loss = joint_loss(u_final, u0, xgt, mask, cfg.lambda_g, mu,
                          extractor, cfg.sgcr_epsilon, cfg.loss_mode)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at step {step} on batch {batch_ids}")
        loss.backward()
        optimizer.step()

        log_interval = steps_per_epoch * max(1, cfg.eval_every)
        if (step + 1) % log_interval == 0 or step + 1 == total_steps:
            with torch.no_grad():
                l_r = float(masked_l1(u_final, xgt, mask))
                l_s = 0.0
                if extractor is not None and cfg.loss_mode in ("sgcr", "cr+sgcr"):
                    l_s = float(sgcr_loss(ContrastiveTriplet(u_final, xgt, u0),
                                          extractor, mu, cfg.sgcr_epsilon))
                elif extractor is not None and cfg.loss_mode == "cr":
                    l_s = float(cr_loss(ContrastiveTriplet(u_final, xgt, u0),
                                        extractor, cfg.sgcr_epsilon))
            eval_idx = holdout_idx or train_idx
            log.append(step=step, epoch=epoch, loss=loss.detach().item(),
                       l_r=l_r, l_s=l_s,
                       psnr_eval=_mean_psnr(model, dataset, eval_idx))

    ckpt = Checkpoint(arrays=state_to_arrays(model, optimizer),
                      config=cfg.to_dict(), epoch=total_steps // steps_per_epoch,
                      step=total_steps)
    return ckpt, log


# --------------------------------------------------------------------------
# Evaluation

@dataclass
class EvalReport:
    method: str
    rows: list[dict]
    sample_rows: list[dict] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["method", "stratum", "n",
                                                    "psnr", "ssim"])
            writer.writeheader()
            writer.writerows(self.rows)

    def to_sample_csv(self, path):
        """Long-form per-sample metrics: method, sample_id, metric, value."""
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["method", "sample_id",
                                                    "metric", "value"])
            writer.writeheader()
            writer.writerows(self.sample_rows)

    def format_table(self) -> str:
        lines = [f"{'stratum':>10} {'n':>4} {'PSNR':>8} {'SSIM':>8}"]
        for row in self.rows:
            lines.append(f"{row['stratum']:>10} {row['n']:>4} "
                         f"{row['psnr']:>8.2f} {row['ssim']:>8.4f}")
        return "\n".join(lines)

    def average(self) -> dict:
        return next(r for r in self.rows if r["stratum"] == "average")


@torch.no_grad()
def _predict(model, pair) -> np.ndarray:
    xm = torch.from_numpy(pair.x_m[None, None].astype(np.float32))
    xl = torch.from_numpy(pair.x_l[None, None].astype(np.float32))
    mask = torch.from_numpy(pair.mask_i[None, None].astype(np.float32))
    out, _ = model(xm, xl, mask)
    return np.clip(out[0, 0].numpy().astype(np.float64), 0.0, 1.0)


def evaluate(dataset: Dataset, model=None, method: str = "model") -> EvalReport:
    """Per-eta-stratum and average PSNR/SSIM against ground truth.

    With ``model=None`` the corrupted input is scored as-is (the baseline
    row improvements are measured against).
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    per_sample = []
    sample_rows = []
    if model is not None:
        model.eval()
    for idx, pair in enumerate(dataset.pairs):
        if not np.isfinite(pair.x_gt).all():
            raise ValueError("synthetic evaluation requires finite ground truth")
        img = _predict(model, pair) if model is not None else pair.x_m
        p, s = psnr(img, pair.x_gt), ssim(img, pair.x_gt)
        per_sample.append((pair.eta, p, s))
        sample_rows.append({"method": method, "sample_id": idx,
                            "metric": "psnr", "value": p})
        sample_rows.append({"method": method, "sample_id": idx,
                            "metric": "ssim", "value": s})

    rows = []
    for eta in sorted({eta for eta, _, _ in per_sample}):
        sel = [(p, s) for e, p, s in per_sample if e == eta]
        rows.append({"method": method, "stratum": f"eta={eta:g}", "n": len(sel),
                     "psnr": float(np.mean([p for p, _ in sel])),
                     "ssim": float(np.mean([s for _, s in sel]))})
    rows.append({"method": method, "stratum": "average", "n": len(per_sample),
                 "psnr": float(np.mean([p for _, p, _ in per_sample])),
                 "ssim": float(np.mean([s for _, _, s in per_sample]))})
    return EvalReport(method=method, rows=rows, sample_rows=sample_rows)


def evaluate_no_gt(images: dict, roi_fg: np.ndarray,
                   roi_bg: np.ndarray) -> list[dict]:
    """Reference-free scoring: background STD and CNR per method.

    ``images`` maps method name to a 2D image; the two ROI masks are shared
    across methods (clinical-style evaluation without ground truth).
    """
    from .metrics import roi_std_cnr

    if not images:
        raise ValueError("need at least one image")
    rows = []
    for name, img in images.items():
        stats = roi_std_cnr(img, roi_fg, roi_bg)
        rows.append({"method": name, "std": stats.std, "cnr": stats.cnr,
                     "cnr_capped": stats.cnr_capped})
    return rows


# --------------------------------------------------------------------------
# Ablation driver

ARCH_VARIANTS = (AblationVariant.FULL, AblationVariant.FDR_NET,
                 AblationVariant.SDI_NET, AblationVariant.UWP_NET,
                 AblationVariant.VARIANT_A, AblationVariant.VARIANT_B)

LOSS_LABELS = {"none": "w/o CR", "cr": "CR", "sgcr": "SGCR", "cr+sgcr": "CR+SGCR"}


@dataclass
class AblationReport:
    arch_rows: list[dict]
    loss_rows: list[dict]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["section", "name", "psnr", "ssim"])
            writer.writeheader()
            for row in self.arch_rows:
                writer.writerow({"section": "architecture", **row})
            for row in self.loss_rows:
                writer.writerow({"section": "loss", **row})

    def format_table(self) -> str:
        lines = ["architecture variants:"]
        lines.append(f"{'variant':>12} {'PSNR':>8} {'SSIM':>8}")
        for row in self.arch_rows:
            lines.append(f"{row['name']:>12} {row['psnr']:>8.2f} {row['ssim']:>8.4f}")
        lines.append("")
        lines.append("loss configurations (full model):")
        lines.append(" | ".join(f"{r['name']}: {r['psnr']:.2f}/{r['ssim']:.4f}"
                                for r in self.loss_rows))
        return "\n".join(lines)


def _train_and_score(variant: AblationVariant, dataset: Dataset,
                     cfg: TrainConfig) -> dict:
    model = build_model(variant, cfg)
    train(model, dataset, cfg)
    avg = evaluate(dataset, model, method=variant.value).average()
    return {"psnr": avg["psnr"], "ssim": avg["ssim"]}


def ablate(dataset: Dataset, cfg: TrainConfig) -> AblationReport:
    """Train every architecture variant and every loss configuration under
    the same seed/config and tabulate the scores. Purely reporting: no
    ordering is asserted."""
    arch_rows = []
    full_by_mode = {}
    for variant in ARCH_VARIANTS:
        score = _train_and_score(variant, dataset, cfg)
        arch_rows.append({"name": variant.name, **score})
        if variant is AblationVariant.FULL:
            full_by_mode[cfg.loss_mode] = score

    loss_rows = []
    for mode in LOSS_MODES:
        if mode not in full_by_mode:
            full_by_mode[mode] = _train_and_score(
                AblationVariant.FULL, dataset, cfg.replace(loss_mode=mode))
        loss_rows.append({"name": LOSS_LABELS[mode], **full_by_mode[mode]})
    return AblationReport(arch_rows=arch_rows, loss_rows=loss_rows)
