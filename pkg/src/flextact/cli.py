"""Command-line client for the tactile service.

All computation happens behind the service endpoints; the CLI only does
file I/O and request plumbing.  By default it talks to an in-process
instance of the app, so no server needs to be running; pass --server to
point at a deployed one.

Exit codes: 0 success, 1 task-level failure (a frame or trial could not
produce its result), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from . import __version__, netpbm
from .config import Config, load_config, with_overrides
from .placement import Scenario
from .simsensor import Scene

__all__ = ["main", "ServiceClient"]

log = logging.getLogger("flextact.cli")


class UsageError(Exception):
    exit_code = 2


class TaskError(Exception):
    exit_code = 1


class ServiceClient:
    """Minimal JSON-over-HTTP client; in-process unless --server is given."""

    def __init__(self, server: str = None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 500:
            raise TaskError(f"service error on {path}: {resp.text}")
        if resp.status_code >= 400:
            raise UsageError(f"{path}: {_detail(resp)}")
        return resp.json()


def _detail(resp) -> str:
    try:
        return str(resp.json().get("detail", resp.text))
    except Exception:
        return resp.text


def _b64(data: bytes) -> str:
    import base64

    return base64.b64encode(data).decode("ascii")


def _unb64(s: str) -> bytes:
    import base64

    return base64.b64decode(s)


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _resolve_config(args) -> Config:
    try:
        cfg = load_config(args.config) if args.config else Config()
        if args.set:
            overrides = {}
            for item in args.set:
                if "=" not in item:
                    raise UsageError(f"--set expects key=value, got {item!r}")
                key, _, raw = item.partition("=")
                try:
                    overrides[key] = json.loads(raw)
                except json.JSONDecodeError:
                    overrides[key] = raw
            cfg = with_overrides(cfg, overrides)
        return cfg
    except (ValidationError, KeyError, json.JSONDecodeError, OSError) as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _scene_list(scene_file: dict, seed) -> list:
    """Expand a scene file into a flat list of validated scenes."""
    if not isinstance(scene_file, dict):
        raise UsageError("scene file must be a JSON object")
    unknown = set(scene_file) - {"scenes", "sweep"}
    if unknown:
        raise UsageError(f"unknown scene file keys: {sorted(unknown)}")
    scenes = []
    sweep = scene_file.get("sweep")
    if sweep is not None:
        n = sweep.get("n_states") if isinstance(sweep, dict) else None
        if not isinstance(n, int) or n < 1:
            raise UsageError("sweep.n_states must be a positive integer")
        for i in range(n):
            b = 0.0 if n == 1 else i / (n - 1)
            scenes.append(Scene(bend=b))
    try:
        for raw in scene_file.get("scenes", []):
            scenes.append(Scene.model_validate(raw))
    except ValidationError as exc:
        raise UsageError(f"invalid scene: {exc}") from exc
    if not scenes:
        raise UsageError("scene file defines no scenes")
    if seed is not None:
        scenes = [s.model_copy(update={"seed": seed + i}) for i, s in enumerate(scenes)]
    return scenes


def _open_library(client: ServiceClient, library_dir) -> str:
    d = Path(library_dir)
    manifest_path = d / "manifest.json"
    if not manifest_path.is_file():
        raise UsageError(f"library missing: no manifest.json in {d}")
    manifest = _load_json(manifest_path)
    frames = {}
    for entry in manifest.get("entries", []):
        name = entry.get("frame_file")
        path = d / name
        if not path.is_file():
            raise UsageError(f"library missing frame file {name}")
        frames[name] = _b64(path.read_bytes())
    resp = client.post("/library/open", {"manifest": manifest, "frames_ppm_b64": frames})
    return resp["library_id"]


def cmd_render(args, client: ServiceClient) -> int:
    cfg = _resolve_config(args)
    scenes = _scene_list(_load_json(args.scene), args.seed)
    payload = {"scenes": [s.model_dump() for s in scenes], "config": cfg.model_dump()}
    resp = client.post("/render", payload)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for item in resp["frames"]:
        stem = f"frame_{item['index']:04d}"
        (out / f"{stem}.ppm").write_bytes(_unb64(item["ppm_b64"]))
        _write_json(out / f"{stem}.json", item["ground_truth"])
    print(f"rendered {len(resp['frames'])} frame(s) to {out}")
    return 0


def cmd_build_library(args, client: ServiceClient) -> int:
    cfg = _resolve_config(args)
    frame_paths = sorted(Path(args.frames).glob("*.ppm"))
    if not frame_paths:
        raise UsageError(f"no .ppm frames in {args.frames}")
    payload = {
        "frames_ppm_b64": [_b64(p.read_bytes()) for p in frame_paths],
        "config": cfg.model_dump(),
    }
    resp = client.post("/library/build", payload)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = resp["manifest"]
    for entry, frame_b64 in zip(manifest["entries"], resp["entry_frames_ppm_b64"]):
        (out / entry["frame_file"]).write_bytes(_unb64(frame_b64))
    _write_json(out / "manifest.json", manifest)
    print(
        f"library: {resp['n_entries']} entries "
        f"({resp['n_deduped']} deduped, {len(resp['rejected'])} rejected) -> {out}"
    )
    for rej in resp["rejected"]:
        print(f"  rejected frame {rej['index']}: {rej['reason']}")
    return 0


def _process_one(client, library_id, ppm_bytes: bytes, outputs) -> dict:
    return client.post(
        "/process",
        {"library_id": library_id, "frame_ppm_b64": _b64(ppm_bytes), "outputs": outputs},
    )


def _write_artifacts(out: Path, stem: str, result: dict, outputs) -> None:
    if result.get("depth") and "depth" in outputs:
        path = out / f"{stem}.depth.pgm"
        path.write_bytes(_unb64(result["depth"]["pgm16_b64"]))
        with open(str(path) + ".meta", "w", encoding="utf-8") as f:
            f.write(f"min {result['depth']['z_min']!r}\nmax {result['depth']['z_max']!r}\n")
    if result.get("orientation") and "orientation" in outputs:
        _write_json(out / f"{stem}.orientation.json", result["orientation"])
    if result.get("markers") is not None and "markers" in outputs:
        _write_json(out / f"{stem}.markers.json", result["markers"])
    if result.get("overlay_ppm_b64") and "overlay" in outputs:
        (out / f"{stem}.overlay.ppm").write_bytes(_unb64(result["overlay_ppm_b64"]))
    _write_json(out / f"{stem}.match.json", result.get("match") or {"error": result.get("error")})


def cmd_process(args, client: ServiceClient) -> int:
    outputs = [o.strip() for o in args.emit.split(",") if o.strip()]
    bad = set(outputs) - {"depth", "orientation", "markers", "overlay"}
    if bad:
        raise UsageError(f"unknown --emit kinds: {sorted(bad)}")
    library_id = _open_library(client, args.library)
    failures = 0

    if args.stream:
        stream_outputs = [o for o in outputs if o in ("orientation", "markers")]
        index = 0
        while True:
            arr = netpbm.read_ppm_stream(sys.stdin.buffer)
            if arr is None:
                break
            result = _process_one(client, library_id, netpbm.ppm_bytes(arr), stream_outputs)
            record = {
                "frame": index,
                "error": result.get("error"),
                "match": result.get("match"),
                "orientation": result.get("orientation"),
                "markers": result.get("markers"),
            }
            print(json.dumps(record, sort_keys=True), flush=True)
            failures += result.get("error") is not None
            index += 1
        return 1 if failures else 0

    if args.frame:
        frame_paths = [Path(args.frame)]
    elif args.frames:
        frame_paths = sorted(Path(args.frames).glob("*.ppm"))
        if not frame_paths:
            raise UsageError(f"no .ppm frames in {args.frames}")
    else:
        raise UsageError("process needs --frame, --frames, or --stream")
    if not args.out:
        raise UsageError("process needs --out unless --stream is used")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in frame_paths:
        if not path.is_file():
            raise UsageError(f"no such frame: {path}")
        result = _process_one(client, library_id, path.read_bytes(), outputs)
        _write_artifacts(out, path.stem, result, outputs)
        if result.get("error"):
            log.warning("frame %s failed: %s", path.name, result["error"])
            failures += 1
    print(f"processed {len(frame_paths)} frame(s) to {out} ({failures} failed)")
    return 1 if failures else 0


def cmd_place(args, client: ServiceClient) -> int:
    try:
        scenario = Scenario.model_validate(_load_json(args.scenario))
    except ValidationError as exc:
        raise UsageError(f"invalid scenario: {exc}") from exc
    library_id = _open_library(client, args.library)
    resp = client.post(
        "/place",
        {
            "library_id": library_id,
            "scenario": scenario.model_dump(),
            "trials": args.trials,
            "seed": args.seed if args.seed is not None else 0,
        },
    )
    summary = resp["summary"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for report in resp["reports"]:
            _write_json(out / f"trial_{report['trial']:03d}.json", report)
        _write_json(out / "summary.json", summary)
    print(
        "trials={trials} successes={successes} degraded={degraded} "
        "aborted={aborted} crashes={crashes}".format(**summary)
    )
    return 1 if summary["aborted"] or summary["crashes"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flextact", description=__doc__)
    parser.add_argument("--version", action="version", version=f"flextact {__version__}")
    parser.add_argument("--config", help="JSON config file (defaults built in)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one dotted config key")
    parser.add_argument("--seed", type=int, default=None, help="base random seed override")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--server", help="URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render scenes to frames + ground-truth sidecars")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("build-library", help="build a reference library from sweep frames")
    p.add_argument("--frames", required=True, help="directory of .ppm sweep frames")
    p.add_argument("--out", required=True, help="library output directory")
    p.set_defaults(func=cmd_build_library)

    p = sub.add_parser("process", help="run the tactile pipeline on frames")
    p.add_argument("--library", required=True, help="reference library directory")
    p.add_argument("--frame", help="single .ppm frame")
    p.add_argument("--frames", help="directory of .ppm frames")
    p.add_argument("--stream", action="store_true", help="read concatenated P6 frames from stdin, emit JSON lines")
    p.add_argument("--out", help="artifact output directory")
    p.add_argument("--emit", default="depth,orientation,markers", help="comma list: depth,orientation,markers,overlay")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("place", help="run simulated placement trials")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--library", required=True, help="reference library directory")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", help="per-trial report directory")
    p.set_defaults(func=cmd_place)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        client = ServiceClient(args.server)
        return args.func(args, client)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
