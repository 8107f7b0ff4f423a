"""Command-line interface: features, train, corrupt, synth, estoi, experiment.

Exit codes: 0 success, 1 runtime/I-O failure, 2 usage or validation error.
"""

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("sarlab")


class UsageError(Exception):
    pass


def _load_spec_arg(value):
    from .corruption import CorruptionSpec
    text = value.strip()
    if not text.startswith("{"):
        text = Path(value).read_text()
    return CorruptionSpec.from_dict(json.loads(text))


def cmd_features(args) -> int:
    from .dsp import (StftConfig, mel_filterbank, mel_spectrogram, read_wav,
                      save_mel)
    src = Path(args.input)
    if not src.exists():
        raise UsageError("input not found: %s" % src)
    paths = sorted(src.rglob("*.wav")) if src.is_dir() else [src]
    if not paths:
        raise UsageError("no WAV files under %s" % src)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    banks = {}
    count = 0
    for path in paths:
        clip = read_wav(path)
        key = clip.sample_rate
        if key not in banks:
            cfg = StftConfig.for_rate(clip.sample_rate, args.fft_size)
            banks[key] = (cfg, mel_filterbank(clip.sample_rate, args.fft_size,
                                              args.n_mels))
        cfg, bank = banks[key]
        save_mel(mel_spectrogram(clip, cfg, bank), out_dir / (path.stem + ".mel"))
        count += 1
    print("processed %d file(s)" % count)
    return 0


def cmd_train(args) -> int:
    from .harness import build_manifest, load_mels, split_dataset
    from .model import SarConfig, TrainConfig, save_checkpoint, train_autoencoder
    data = Path(args.data)
    if not data.is_dir():
        raise UsageError("data directory not found: %s" % data)
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
    sar_cfg = SarConfig(**overrides.get("sar_config", {}))
    sar_cfg.alpha_max = args.alpha_max
    manifest = build_manifest(data)
    split = split_dataset(manifest, args.seed)
    train_cfg = TrainConfig(
        batch_size=overrides.get("batch_size", 16),
        lr=overrides.get("lr", 1e-3),
        max_epochs=overrides.get("max_epochs", 50),
        patience=overrides.get("patience", 10),
        seed=args.seed,
        alpha_max=args.alpha_max,
    )
    limit = overrides.get("train_limit")
    train_ids = split.train[:limit] if limit else split.train
    train_mels = load_mels(manifest, train_ids, sar_cfg.n_mels)
    val_mels = load_mels(manifest, split.val, sar_cfg.n_mels)
    model, history = train_autoencoder(train_mels, val_mels, train_cfg, sar_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    history_path = out.with_suffix(".history.csv")
    history.save_csv(history_path)
    print("checkpoint: %s" % out)
    print("history: %s" % history_path)
    return 0


def cmd_corrupt(args) -> int:
    from .corruption import corrupt
    from .dsp import MelSpectrogram, load_mel, read_wav, save_mel, write_wav
    spec = _load_spec_arg(args.spec)
    src = Path(args.input)
    if not src.exists():
        raise UsageError("input not found: %s" % src)
    if spec.kind == "none":
        shutil.copyfile(src, args.out)  # byte-identical
        return 0
    if src.suffix == ".mel":
        mel = load_mel(src)
        if spec.kind == "band_limit":
            raise UsageError("band_limit applies to audio, not mel features")
        out = corrupt(mel.frames, spec)
        if spec.kind == "white_noise":
            noise = out - mel.frames
            realized = 10 * np.log10(np.mean(mel.frames ** 2) / np.mean(noise ** 2))
            print("realized SNR: %.2f dB" % realized)
        save_mel(MelSpectrogram(out, mel.sample_rate, mel.hop), args.out)
    else:
        clip = read_wav(src)
        if spec.kind != "band_limit":
            raise UsageError("%s applies to mel features, not audio" % spec.kind)
        write_wav(corrupt(clip, spec), args.out)
    return 0


def cmd_synth(args) -> int:
    from .dsp import (MelSpectrogram, StftConfig, griffin_lim, load_mel,
                      mel_filterbank, mel_spectrogram, read_wav, write_wav)
    if bool(args.mel) == bool(args.wav):
        raise UsageError("provide exactly one of --mel or --wav")
    if args.via in ("ae", "sar") and not args.ckpt:
        raise UsageError("--via %s requires --ckpt" % args.via)
    if args.mel:
        mel = load_mel(args.mel)
        cfg = StftConfig(fft_size=args.fft_size, hop=mel.hop)
        bank = mel_filterbank(mel.sample_rate, args.fft_size, mel.n_mels)
    else:
        clip = read_wav(args.wav)
        cfg = StftConfig.for_rate(clip.sample_rate, args.fft_size)
        bank = mel_filterbank(clip.sample_rate, args.fft_size, 80)
        mel = mel_spectrogram(clip, cfg, bank)
    if args.via in ("ae", "sar"):
        from .model import load_checkpoint
        model = load_checkpoint(args.ckpt)
        frames = model.decode(model.encode(mel))
        mel = MelSpectrogram(frames, mel.sample_rate, mel.hop)
    out = griffin_lim(mel, cfg, bank, iterations=args.gl_iterations)
    write_wav(out, args.out)
    print("wrote %s" % args.out)
    return 0


def cmd_estoi(args) -> int:
    from .dsp import read_wav
    from .metrics import estoi
    score = estoi(read_wav(args.ref), read_wav(args.deg))
    print("%.4f" % score)
    return 0


def cmd_experiment(args) -> int:
    from .harness import emit_report, run_table_experiment
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise UsageError("config not found: %s" % cfg_path)
    config = json.loads(cfg_path.read_text())
    if args.threads:
        config["threads"] = args.threads
    table = run_table_experiment(config, train_first=args.train_first)
    out_dir = config.get("output_dir", ".")
    written = emit_report(table, out_dir)
    for kind, path in written.items():
        print("%s: %s" % (kind, path))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarlab")
    p.add_argument("--seed", type=int, default=1337)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("features", help="extract mel feature files")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--fft-size", type=int, default=1024)
    f.add_argument("--n-mels", type=int, default=80)
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="train an auto-encoder checkpoint")
    t.add_argument("--data", required=True)
    t.add_argument("--alpha-max", type=float, default=0.2)
    t.add_argument("--config", default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("corrupt", help="apply a corruption to a wav or mel file")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--spec", required=True, help="JSON string or path")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("synth", help="copy-synthesis via Griffin-Lim")
    s.add_argument("--mel", default=None)
    s.add_argument("--wav", default=None)
    s.add_argument("--via", choices=["mel", "ae", "sar"], default="mel")
    s.add_argument("--ckpt", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--fft-size", type=int, default=1024)
    s.add_argument("--gl-iterations", type=int, default=60)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("estoi", help="intelligibility score of a wav pair")
    e.add_argument("--ref", required=True)
    e.add_argument("--deg", required=True)
    e.set_defaults(func=cmd_estoi)

    x = sub.add_parser("experiment", help="run the anti-distortion report grid")
    x.add_argument("--config", required=True)
    x.add_argument("--train-first", action="store_true")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None:
        from .harness import default_threads
        args.threads = default_threads()
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
