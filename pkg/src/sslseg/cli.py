"""Command-line entry point: ``sslseg <command> ...``.

Exit codes: 0 success, 2 argument error, 3 data/format error, 4 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bundle import load_bundle, save_bundle
from .cascade import CascadeConfig
from .crf import CrfConfig
from .data_io import load_image, preprocess, read_manifest, write_pgm, write_ppm, write_raw
from .errors import FormatError, InvalidArgumentError, NumericError
from .featsel import DEFAULT_KEEP_RATIO
from .gbdt import GbdtConfig
from .phantom import write_phantom_set
from .pipeline import evaluate_manifest, predict, report_params, sweep_units, train_pipeline

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# RGB per class for overlays: background transparent, RV red, MYO green, LV blue
OVERLAY_COLOURS = np.array([[0, 0, 0], [230, 50, 50], [50, 200, 50], [60, 90, 230]], dtype=np.float64)
OVERLAY_ALPHA = 0.45

log = logging.getLogger("sslseg")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def _cascade_config(units, kernels):
    if kernels is None:
        return CascadeConfig.for_units(units if units is not None else 4)
    if units is not None and units != len(kernels):
        raise InvalidArgumentError(f"--units {units} disagrees with {len(kernels)} --kernels values")
    return CascadeConfig(kernels=tuple(kernels))


def cmd_train(args):
    manifest = read_manifest(args.manifest)
    cascade = _cascade_config(args.units, args.kernels)
    gbdt = GbdtConfig(num_rounds=args.rounds, max_depth=args.depth)
    crf = CrfConfig(iterations=0) if args.no_crf else CrfConfig()
    bundle = train_pipeline(manifest, cascade, gbdt, crf, seed=args.seed, keep_ratio=args.keep_ratio,
                            feature_selection=not args.no_featsel)
    save_bundle(bundle, args.out)
    counts = report_params(bundle)
    print(f"wrote {args.out}: {counts['kept_channels']}/{counts['total_channels']} channels, "
          f"{counts['cascade_params']} cascade parameters, {counts['trees']} trees")


def overlay_rgb(image, labels):
    img = np.asarray(image, dtype=np.float64)[:, :, 0]
    lo, hi = img.min(), img.max()
    grey = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo) * 255.0
    rgb = np.repeat(grey[:, :, None], 3, axis=2)
    fg = labels > 0
    rgb[fg] = (1 - OVERLAY_ALPHA) * rgb[fg] + OVERLAY_ALPHA * OVERLAY_COLOURS[labels[fg]]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def cmd_predict(args):
    bundle = load_bundle(args.bundle)
    image = load_image(args.image)
    out = predict(bundle, image)
    write_pgm(args.out_labels, out.labels, maxval=255)
    if args.out_probs:
        write_raw(args.out_probs, out.probs.astype(np.float32))
    if args.overlay:
        write_ppm(args.overlay, overlay_rgb(preprocess(image, bundle.image_size), out.labels))
    counts = np.bincount(out.labels.ravel(), minlength=4)
    print("pixels per class (bg, RV, MYO, LV): " + " ".join(str(c) for c in counts))


def cmd_eval(args):
    bundle = load_bundle(args.bundle)
    manifest = read_manifest(args.manifest)
    report = evaluate_manifest(bundle, manifest, args.split, per_subject=args.per_subject)
    sys.stdout.write(report.to_tsv())
    if args.report:
        Path(args.report).write_text(report.to_keyvalue())


def cmd_phantom_gen(args):
    if args.count < 1:
        raise InvalidArgumentError("--count must be >= 1")
    manifest = write_phantom_set(args.out_dir, args.count, seed=args.seed, noise_sigma=args.noise)
    sizes = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    print(f"wrote {args.count} phantoms to {args.out_dir} "
          f"(train {sizes['train']}, val {sizes['val']}, test {sizes['test']})")


def cmd_sweep(args):
    manifest = read_manifest(args.manifest)
    rows = sweep_units(manifest, args.units, num_seeds=args.seeds)
    print("units\tmean_dice\tstd_dice")
    for units, mean, std in rows:
        print(f"{units}\t{mean:.4f}\t{std:.4f}")


def cmd_inspect(args):
    bundle = load_bundle(args.bundle)
    counts = report_params(bundle)
    print(f"format_version\t{bundle.format_version}")
    print(f"seed\t{bundle.seed}")
    print(f"image_size\t{bundle.image_size}")
    print(f"kernels\t{','.join(str(k) for k in bundle.cascade.config.kernels)}")
    for key, value in counts.items():
        print(f"{key}\t{value}")
    crf = bundle.crf
    print(f"crf\titerations={crf.iterations} w_s={crf.spatial_weight} w_a={crf.appearance_weight} "
          f"sigma_s={crf.spatial_sigma} sigma_xy={crf.appearance_sigma_xy} "
          f"sigma_i={crf.appearance_sigma_intensity}")
    print()
    print("unit\tchannel\tkept\tH_bg\tH_rv\tH_myo\tH_lv\tH_total")
    sel = bundle.selection
    row = 0
    for u, keep in enumerate(sel.keep):
        for c, kept in enumerate(keep):
            h = sel.entropies[row]
            print(f"{u + 1}\t{c}\t{int(kept)}\t" + "\t".join(f"{v:.4f}" for v in h)
                  + f"\t{h.sum():.4f}")
            row += 1


def build_parser():
    p = argparse.ArgumentParser(prog="sslseg", description="Saab-cascade cardiac segmentation toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model bundle from a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--units", type=int, default=None, help="number of cascade units (default 4)")
    t.add_argument("--kernels", type=_int_list, default=None, help="comma-separated kernels per unit")
    t.add_argument("--keep-ratio", type=float, default=DEFAULT_KEEP_RATIO)
    t.add_argument("--rounds", type=int, default=GbdtConfig.num_rounds)
    t.add_argument("--depth", type=int, default=GbdtConfig.max_depth)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-crf", action="store_true", help="store a CRF config that is a no-op")
    t.add_argument("--no-featsel", action="store_true", help="keep every channel")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="segment one image")
    pr.add_argument("--bundle", required=True)
    pr.add_argument("--image", required=True)
    pr.add_argument("--out-labels", required=True)
    pr.add_argument("--out-probs")
    pr.add_argument("--overlay")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="Dice report on a manifest split")
    e.add_argument("--bundle", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--per-subject", action="store_true", help="pool slices per subject")
    e.add_argument("--report", help="also write key=value metrics here")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("phantom-gen", help="write synthetic phantoms and a manifest")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.08)
    g.set_defaults(func=cmd_phantom_gen)

    s = sub.add_parser("sweep", help="Dice versus number of cascade units")
    s.add_argument("--manifest", required=True)
    s.add_argument("--units", type=_int_list, default=[2, 3, 4, 5])
    s.add_argument("--seeds", type=int, default=5)
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("inspect", help="summarise a bundle")
    i.add_argument("--bundle", required=True)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
