"""Command-line pipeline: trace photons, path trace, train, render PM layers, composite, evaluate.

Every subcommand writes ``run_<subcommand>.json`` into ``--out-dir`` with the
resolved parameters and SHA-256 hashes of its inputs and outputs. Thread count
changes wall time only; outputs are byte-identical for any ``--threads``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path


from . import __version__, backend
from .errors import DeepKPMError

log = logging.getLogger("deepkpm")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _int_list(text):
    try:
        vals = [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be >= 1")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit master seed (default 0)")
    g.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS,
                   help="worker threads; never changes outputs (default 1)")
    g.add_argument("--out-dir", default=argparse.SUPPRESS,
                   help="directory for outputs given as relative paths and for run manifests (default .)")

    p = argparse.ArgumentParser(prog="deepkpm", parents=[common], description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"deepkpm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("trace-photons", parents=[common], help="trace LS photons and write a photon dump")
    s.add_argument("--scene", required=True, help="scene file or bundled scene name")
    s.add_argument("--n-emit", type=_nonneg_int, required=True, help="emitted photon paths N")
    s.add_argument("--max-bounces", type=_positive_int, default=8)
    s.add_argument("--out", required=True, help="photon dump path")

    s = sub.add_parser("render-pt", parents=[common], help="path trace an image")
    s.add_argument("--scene", required=True)
    s.add_argument("--spp", type=_positive_int, required=True, help="samples per pixel (>= 1)")
    s.add_argument("--mode", choices=("full", "no_ls"), default="full")
    s.add_argument("--max-bounces", type=_nonneg_int, default=8)
    s.add_argument("--out", required=True, help="output image (.pfm or .ppm)")

    s = sub.add_parser("train", parents=[common], help="build a training set and train a network")
    s.add_argument("--scenes", nargs="+", required=True, help="training scene files or bundled names")
    s.add_argument("--k", type=int, choices=(50, 500), required=True)
    s.add_argument("--steps", type=_nonneg_int, required=True)
    s.add_argument("--head", choices=("kernel", "direct"), default="kernel")
    s.add_argument("--out-ckpt", required=True)
    s.add_argument("--loss-curve", help="CSV of (step, smoothed loss)")
    s.add_argument("--photons", type=_positive_int, nargs="+", default=[2000, 20_000],
                   help="emitted paths per training photon map; maps cycle through the given counts")
    s.add_argument("--points", type=_nonneg_int, default=24_000, help="shading points per scene")
    s.add_argument("--maps", type=_positive_int, default=16, help="independent photon maps per scene")
    s.add_argument("--maps-per-point", type=_positive_int, default=4, help="maps each point is gathered in")
    s.add_argument("--ref-factor", type=_positive_int, default=200,
                   help="label map size as a multiple of the largest --photons count")
    s.add_argument("--batch-size", type=_positive_int, default=32)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--dataset", help="cache .npz: loaded if present, else built and saved")

    s = sub.add_parser("render-pm", parents=[common], help="render the photon-mapped LS layer")
    s.add_argument("--scene", required=True)
    s.add_argument("--photons", required=True, help="photon dump from trace-photons")
    s.add_argument("--k", type=_positive_int, required=True)
    s.add_argument("--method", choices=("ours", "classic"), required=True)
    s.add_argument("--ckpt", help="checkpoint (required for --method ours)")
    s.add_argument("--kernel", choices=("epanechnikov", "constant", "cone"), default="epanechnikov")
    s.add_argument("--out", required=True)

    s = sub.add_parser("composite", parents=[common], help="add a PM LS layer to a no_ls path-traced image")
    s.add_argument("--pm", required=True)
    s.add_argument("--pt", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("eval-grid", parents=[common], help="RMSE/PSNR/SSIM over a (K, M) grid")
    s.add_argument("--scene", required=True)
    s.add_argument("--ks", type=_int_list, default=[50, 500], help="comma-separated K values")
    s.add_argument("--ms", type=_int_list, required=True, help="comma-separated emitted path counts")
    s.add_argument("--ckpt50")
    s.add_argument("--ckpt500")
    s.add_argument("--ref", required=True, help="reference LS layer (PFM) at the same seed")
    s.add_argument("--out-table", required=True, help="CSV with header K,M,method,rmse,psnr,ssim")

    s = sub.add_parser("metrics", parents=[common], help="compare two images")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    return p


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    def __init__(self, args):
        self.args = args
        self.seed = int(getattr(args, "seed", 0))
        self.threads = int(getattr(args, "threads", 1))
        self.out_dir = Path(getattr(args, "out_dir", "."))
        self.inputs, self.outputs = {}, {}

    def out(self, path) -> Path:
        p = Path(path)
        p = p if p.is_absolute() else self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def input(self, path) -> Path:
        p = Path(path)
        self.inputs[str(p)] = sha256(p)
        return p

    def wrote(self, path):
        self.outputs[str(path)] = sha256(path)

    def scene(self, name):
        from .scene import bundled_scene_path, load_scene
        p = Path(name)
        if not p.exists() and "/" not in name and not name.endswith(".scene"):
            try:
                p = bundled_scene_path(name)
            except FileNotFoundError:
                pass
        return load_scene(self.input(p))

    def manifest(self, extra=None):
        params = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("threads", "out_dir")}
        params["seed"] = self.seed
        doc = {
            "command": self.args.command, "version": __version__, "parameters": params,
            "inputs": self.inputs, "outputs": self.outputs,
            "runtime": {"threads": self.threads, "backend": backend.NAME},
        }
        if extra:
            doc.update(extra)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"run_{self.args.command.replace('-', '_')}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def cmd_trace_photons(r: Run):
    from .photons import save_photons, trace_photons
    a = r.args
    pm = trace_photons(r.scene(a.scene), a.n_emit, a.max_bounces, r.seed, r.threads)
    out = r.out(a.out)
    save_photons(pm, out)
    r.wrote(out)
    print(f"N={pm.n_emitted} M={pm.m_valid} -> {out}")
    return {"counts": {"N": pm.n_emitted, "M": pm.m_valid}}


def cmd_render_pt(r: Run):
    from .image import write_image
    from .pathtracer import RenderJob, render_pt
    a = r.args
    img = render_pt(RenderJob(r.scene(a.scene), a.spp, a.max_bounces, a.mode, r.seed), r.threads)
    out = r.out(a.out)
    write_image(img, out)
    r.wrote(out)
    print(f"{img.width}x{img.height} spp={a.spp} mode={a.mode} -> {out}")


def cmd_train(r: Run):
    from .checkpoint import CheckpointMeta, save_checkpoint
    from .dataset import Dataset, make_training_set
    from .training import AdamHyper, TrainConfig, train
    a = r.args
    ds = None
    if a.dataset and Path(a.dataset).exists():
        ds = Dataset.load(r.input(a.dataset))
    if ds is None:
        scenes = [r.scene(s) for s in a.scenes]
        ds = make_training_set(scenes, a.photons, a.points, a.k, r.seed, a.maps, ref_factor=a.ref_factor,
                               maps_per_point=a.maps_per_point, threads=r.threads)
        if a.dataset:
            out = r.out(a.dataset)
            ds.save(out)
            r.wrote(out)
    cfg = TrainConfig(k=a.k, batch_size=a.batch_size, steps=a.steps, adam=AdamHyper(lr=a.lr), seed=r.seed,
                      head=a.head, dataset_paths=tuple(a.scenes))
    res = train(cfg, ds, progress=lambda s, l: log.info("step %d loss %.6g", s, l))
    out = r.out(a.out_ckpt)
    save_checkpoint(res.params, CheckpointMeta(k=a.k, seed=r.seed, head=a.head), out)
    r.wrote(out)
    if a.loss_curve:
        lc = r.out(a.loss_curve)
        lc.write_text("step,loss\n" + "".join(f"{s},{l!r}\n" for s, l in res.curve))
        r.wrote(lc)
    print(f"samples={len(ds)} steps={a.steps} final_loss={res.final_loss:.6g} -> {out}")


def cmd_render_pm(r: Run):
    from .checkpoint import load_checkpoint
    from .density import KernelKind
    from .estimate import ClassicPM, Learned, render_ls
    from .image import write_image
    from .photons import load_photons
    a = r.args
    scene = r.scene(a.scene)
    pm = load_photons(r.input(a.photons))
    if a.method == "ours":
        if not a.ckpt:
            raise SystemExit(_usage_error("render-pm --method ours requires --ckpt"))
        params, meta = load_checkpoint(r.input(a.ckpt), expected_k=a.k)
        est = Learned(params, a.k, meta.head)
    else:
        est = ClassicPM(a.k, KernelKind(a.kernel))
    img = render_ls(scene, pm, est, seed=r.seed, threads=r.threads)
    out = r.out(a.out)
    write_image(img, out)
    r.wrote(out)
    print(f"{a.method} K={a.k} M={pm.m_valid} -> {out}")


def cmd_composite(r: Run):
    from .image import composite, read_image, write_image
    a = r.args
    img = composite(read_image(r.input(a.pm)), read_image(r.input(a.pt)))
    out = r.out(a.out)
    write_image(img, out)
    r.wrote(out)
    print(f"-> {out}")


def cmd_eval_grid(r: Run):
    from .checkpoint import load_checkpoint
    from .dataset import sub_seed
    from .evaluation import eval_grid
    from .image import read_image
    from .photons import trace_photons
    a = r.args
    scene = r.scene(a.scene)
    ckpts = {}
    for k, path in ((50, a.ckpt50), (500, a.ckpt500)):
        if path:
            params, meta = load_checkpoint(r.input(path), expected_k=k)
            ckpts[k] = (params, meta.head)
    ref = read_image(r.input(a.ref))
    maps = [trace_photons(scene, n, seed=sub_seed(r.seed, 0, 3, j), threads=r.threads) for j, n in enumerate(a.ms)]
    table = eval_grid(scene, a.ks, maps, ckpts, ref, seed=r.seed, threads=r.threads)
    out = r.out(a.out_table)
    table.write(out)
    r.wrote(out)
    sys.stdout.write(table.to_csv())


def cmd_metrics(r: Run):
    from .image import read_image
    from .metrics import psnr, rmse, ssim
    a = r.args
    x, y = read_image(r.input(a.a)), read_image(r.input(a.b))
    vals = {"rmse": rmse(x, y), "psnr": psnr(x, y), "ssim": ssim(x, y)}
    for k, v in vals.items():
        print(f"{k} {v:.10g}")
    return {"metrics": vals}


COMMANDS = {
    "trace-photons": cmd_trace_photons, "render-pt": cmd_render_pt, "train": cmd_train,
    "render-pm": cmd_render_pm, "composite": cmd_composite, "eval-grid": cmd_eval_grid,
    "metrics": cmd_metrics,
}


def _usage_error(msg):
    print(f"deepkpm: error: {msg}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    run = Run(args)
    try:
        extra = COMMANDS[args.command](run)
        run.manifest(extra)
    except SystemExit as exc:
        return int(exc.code or 0)
    except DeepKPMError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
