"""``imudiff`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config, resolve_paths
from .diffusion import TrainingDiverged

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="JSON config file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    p.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output root (default: .)")
    p.add_argument("--profile", choices=("fast", "full"), default=argparse.SUPPRESS, help="preset sizes (default: full)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="imudiff", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)

    sub.add_parser("gen-corpus", parents=[common], help="write a synthetic motion corpus")

    p = sub.add_parser("train", parents=[common], help="train a base denoiser")
    p.add_argument("--corpus", metavar="DIR", help="corpus directory (default: <out>/corpus)")
    p.add_argument("--name", default="base", help="checkpoint name (default: base)")

    p = sub.add_parser("finetune", parents=[common], help="continue training with the acceleration loss")
    p.add_argument("--corpus", metavar="DIR")
    p.add_argument("--base", metavar="CKPT", help="base checkpoint (default: <checkpoints>/base.json)")
    p.add_argument("--name", default="refined")
    p.add_argument("--lambda-acc", type=float, dest="lambda_acc")
    p.add_argument("--allow-zero-acc", action="store_true", default=None, help="permit lambda_acc = 0 (control runs)")

    p = sub.add_parser("sample", parents=[common], help="generate motions for prompts")
    p.add_argument("--checkpoint", metavar="CKPT", help="default: <checkpoints>/refined.json")
    p.add_argument("--prompts", metavar="FILE", help="JSON list, JSON {label: [prompts]} or text lines")
    p.add_argument("--dest", metavar="DIR", help="default: <outputs>/samples/<checkpoint name>")

    p = sub.add_parser("imu", parents=[common], help="synthesise IMU signals from motion files")
    p.add_argument("--motions", metavar="DIR", help="default: <corpus>/motions")
    p.add_argument("--dest", metavar="DIR", help="default: <outputs>/imu/<motions dir name>")

    p = sub.add_parser("ingest-realworld", parents=[common], help="normalise RealWorld-style CSV recordings")
    p.add_argument("--input", metavar="DIR", required=True)
    p.add_argument("--dest", metavar="DIR", help="default: <outputs>/realworld")

    p = sub.add_parser("eval", parents=[common], help="train HAR on synthetic windows, test on real ones")
    p.add_argument("--synthetic", metavar="DIR", required=True)
    p.add_argument("--real", metavar="DIR", required=True)
    p.add_argument("--base", metavar="CKPT", help="base checkpoint for the loss-change report")
    p.add_argument("--refined", metavar="CKPT", help="refined checkpoint for the loss-change report")
    p.add_argument("--heldout", metavar="DIR", help="held-out corpus for the loss-change report")
    p.add_argument("--dest", metavar="DIR", help="default: <outputs>/eval")

    p = sub.add_parser("report", parents=[common], help="summarise one or more eval directories")
    p.add_argument("inputs", nargs="+", metavar="EVAL_DIR")
    p.add_argument("--dest", metavar="DIR", help="default: <outputs>/report")
    return parser


def run(args) -> int:
    cfg = load_config(getattr(args, "config", None), getattr(args, "profile", "full"), getattr(args, "seed", None))
    out = Path(getattr(args, "out", "."))
    paths = resolve_paths(cfg, out)
    verb = args.verb

    if verb == "gen-corpus":
        m = pipeline.gen_corpus(cfg, paths["corpus"])
        print(f"wrote {len(m['items'])} clips to {paths['corpus']}")
    elif verb == "train":
        _, ckpt = pipeline.train_model(cfg, args.corpus or paths["corpus"], paths["checkpoints"], args.name)
        print(f"wrote {ckpt}")
    elif verb == "finetune":
        base = args.base or paths["checkpoints"] / "base.json"
        _, ckpt = pipeline.finetune_model(cfg, args.corpus or paths["corpus"], paths["checkpoints"], base, args.name,
                                          args.lambda_acc, args.allow_zero_acc)
        print(f"wrote {ckpt}")
    elif verb == "sample":
        ckpt = Path(args.checkpoint or paths["checkpoints"] / "refined.json")
        dest = args.dest or paths["outputs"] / "samples" / ckpt.stem
        prompts = pipeline.read_prompts(args.prompts or cfg["sample"]["prompts"])
        m = pipeline.sample_motions(cfg, ckpt, dest, prompts)
        print(f"wrote {len(m['items'])} motions to {dest}")
    elif verb == "imu":
        motions = Path(args.motions or paths["corpus"] / "motions")
        dest = args.dest or paths["outputs"] / "imu" / motions.name
        m = pipeline.synthesize_dir(cfg, motions, dest)
        print(f"wrote {len(m['items'])} signals to {dest}")
    elif verb == "ingest-realworld":
        dest = args.dest or paths["outputs"] / "realworld"
        m = pipeline.ingest_realworld(cfg, args.input, dest)
        print(f"wrote {len(m['items'])} signals to {dest} ({m['dropped_rows']} rows dropped)")
    elif verb == "eval":
        dest = args.dest or paths["outputs"] / "eval"
        rep = pipeline.evaluate(cfg, args.synthetic, args.real, dest, args.base, args.refined, args.heldout)
        print(f"balanced accuracy {rep.mean:.4f} +/- {rep.std:.4f} over {len(rep.balanced_accuracy)} runs; report in {dest}")
    elif verb == "report":
        dest = args.dest or paths["outputs"] / "report"
        rows = pipeline.summarize(args.inputs, dest)
        print(json.dumps(rows, indent=1))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.verb:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return run(args)
    except (UsageError, ConfigError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except pipeline.DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as e:
        print(f"numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
