"""Corpus synthesis from a JSON-lines manifest.

The manifest's first line is a header, every further line one clean/noise
pair::

    {"kind": "header", "seed": 7, "reverb_fraction": 0.5, "snr_range_db": [0, 40]}
    {"clean": "clean/a.wav", "noise": "noise/cafe.wav", "split": "train"}
    {"clean": "clean/b.wav", "noise": "noise/car.wav", "snr_db": 5, "reverb": false}

Relative paths resolve against the manifest's directory. The synthesized corpus
is a directory of WAV files plus ``index.jsonl``.
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from pesqnet_dns.core.models import RoomSpec, UtteranceRecord, Waveform
from pesqnet_dns.data.levels import (
    TARGET_LEVEL_DBOV,
    active_level_dbov,
    mix_at_snr,
    normalize_level,
    rms_level_dbov,
)
from pesqnet_dns.data.rir import (
    estimate_rt60,
    normalize_direct_path,
    reverberate,
    sample_room,
    simulate_rir,
)
from pesqnet_dns.dsp.audio_io import quantize_pcm16, read_wav, write_wav
from pesqnet_dns.error_handling import CorpusError, report_file_error

logger = logging.getLogger(__name__)

INDEX_FILE = "index.jsonl"
PEAK_GUARD = 0.99
SPLITS = ("train", "val", "test")

Split = Literal["train", "val", "test"]


class ManifestHeader(BaseModel):
    """Corpus-wide synthesis parameters."""

    kind: Literal["header"] = "header"
    seed: int = 0
    reverb_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    snr_grid_db: Optional[List[float]] = None
    snr_range_db: Optional[Tuple[float, float]] = None
    target_level_dbov: float = TARGET_LEVEL_DBOV
    mixture_level_range_dbov: Optional[Tuple[float, float]] = None
    max_image_order: int = Field(default=10, ge=0)

    @model_validator(mode="after")
    def _check_snr_source(self) -> "ManifestHeader":
        if self.snr_grid_db is not None and self.snr_range_db is not None:
            raise ValueError("give either snr_grid_db or snr_range_db, not both")
        if self.snr_grid_db is not None and not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        for name in ("snr_range_db", "mixture_level_range_dbov"):
            bounds = getattr(self, name)
            if bounds is not None and bounds[0] > bounds[1]:
                raise ValueError(f"{name} lower bound exceeds upper bound")
        return self


class ManifestEntry(BaseModel):
    """One clean/noise pair."""

    clean: Path
    noise: Path
    snr_db: Optional[float] = None
    reverb: Optional[bool] = None
    split: Split = "train"


@dataclass
class Manifest:
    """Parsed manifest with paths resolved."""

    header: ManifestHeader
    entries: List[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def resolve(self, path: Path) -> Path:
        """Resolve ``path`` against the manifest directory."""
        return path if path.is_absolute() else self.root / path


def read_manifest(path: Union[str, Path]) -> Manifest:
    """Parse and validate a manifest file.

    Raises:
        CorpusError: On unreadable or malformed manifests, an empty entry list,
            or referenced audio files that do not exist (all listed at once).
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        report_file_error(e, path, "read")
        raise CorpusError(f"cannot read manifest {path}", path=str(path)) from e

    header: Optional[ManifestHeader] = None
    entries: List[ManifestEntry] = []
    problems: List[str] = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
            if header is None and data.get("kind") == "header":
                header = ManifestHeader.model_validate(data)
            else:
                entries.append(ManifestEntry.model_validate(data))
        except (json.JSONDecodeError, ValidationError, AttributeError) as e:
            problems.append(f"line {line_no}: {e}")

    if problems:
        raise CorpusError(
            f"manifest {path} is malformed", path=str(path), problems=problems
        )
    if not entries:
        raise CorpusError(f"manifest {path} lists no utterances", path=str(path))

    manifest = Manifest(header or ManifestHeader(), entries, path.parent)
    missing = sorted(
        {
            str(manifest.resolve(p))
            for entry in entries
            for p in (entry.clean, entry.noise)
            if not manifest.resolve(p).is_file()
        }
    )
    if missing:
        raise CorpusError(
            f"{len(missing)} manifest file(s) not found", missing=missing
        )
    return manifest


def assign_reverb(
    explicit: Sequence[Optional[bool]], fraction: float, seed: int
) -> List[bool]:
    """Decide which records are reverberated.

    Exactly ``round(fraction * N)`` records are reverberated where the explicit
    flags allow it; unflagged records are drawn by a seeded permutation.
    """
    n = len(explicit)
    flags = [bool(f) for f in explicit]
    wanted = int(round(fraction * n)) - sum(1 for f in explicit if f is True)
    free = [i for i, f in enumerate(explicit) if f is None]
    if wanted > 0 and free:
        order = np.random.default_rng([seed, n]).permutation(len(free))
        for pos in order[:wanted]:
            flags[free[int(pos)]] = True
    return flags


def crop_or_tile(noise: Waveform, n_samples: int, rng: np.random.Generator) -> Waveform:
    """Noise segment of ``n_samples`` starting at a random offset.

    Short noise files are tiled first.
    """
    samples = noise.samples
    if len(samples) == 0:
        raise CorpusError("noise file is empty")
    if len(samples) < n_samples:
        samples = np.tile(samples, int(np.ceil(n_samples / len(samples))) + 1)
    offset = int(rng.integers(0, len(samples) - n_samples + 1))
    return Waveform(samples[offset : offset + n_samples].copy(), noise.sample_rate)


def _draw_snr(entry: ManifestEntry, header: ManifestHeader, rng: np.random.Generator) -> float:
    if entry.snr_db is not None:
        return float(entry.snr_db)
    if header.snr_grid_db is not None:
        return float(rng.choice(np.asarray(header.snr_grid_db, dtype=np.float64)))
    if header.snr_range_db is not None:
        return float(rng.uniform(*header.snr_range_db))
    raise CorpusError(
        "entry has no snr_db and the header gives neither snr_grid_db nor snr_range_db",
        clean=str(entry.clean),
    )


def synthesize_record(
    index: int, manifest: Manifest, reverb: bool
) -> Tuple[UtteranceRecord, Dict[str, str]]:
    """Build record ``index`` from its own RNG stream ``(seed, index)``."""
    header = manifest.header
    entry = manifest.entries[index]
    rng = np.random.default_rng([header.seed, index])
    uid = f"utt-{index:05d}"

    clean = normalize_level(read_wav(manifest.resolve(entry.clean)), header.target_level_dbov)
    noise = crop_or_tile(read_wav(manifest.resolve(entry.noise)), len(clean), rng)
    snr_db = _draw_snr(entry, header, rng)

    room: Optional[RoomSpec] = None
    rt60: Optional[float] = None
    rir_id: Optional[str] = None
    s_rev = clean
    if reverb:
        room = sample_room(rng, header.max_image_order)
        rir = normalize_direct_path(simulate_rir(room))
        s_rev = reverberate(clean, rir)
        rt60 = estimate_rt60(room)
        rir_id = f"rir-{index:05d}"
        logger.debug("%s: room %s, RT60 %.3f s", uid, room.dims, rt60)

    mixture, scaled_noise = mix_at_snr(s_rev, noise, snr_db)

    gain = 1.0
    if header.mixture_level_range_dbov is not None:
        target = rng.uniform(*header.mixture_level_range_dbov)
        gain = 10.0 ** ((target - rms_level_dbov(mixture)) / 20.0)
    peak = gain * max(
        float(np.max(np.abs(c.samples))) for c in (clean, s_rev, scaled_noise, mixture)
    )
    if peak > PEAK_GUARD:
        gain *= PEAK_GUARD / peak

    clean_q = Waveform(quantize_pcm16(clean.samples * gain))
    s_rev_q = clean_q if not reverb else Waveform(quantize_pcm16(s_rev.samples * gain))
    noise_q = Waveform(quantize_pcm16(scaled_noise.samples * gain))
    mixture_q = Waveform(s_rev_q.samples + noise_q.samples)

    record = UtteranceRecord(
        uid=uid,
        clean=clean_q,
        reverberated_clean=s_rev_q,
        noise_segment=noise_q,
        mixture=mixture_q,
        snr_db=snr_db,
        level_dbov=active_level_dbov(clean_q),
        rir_id=rir_id,
        split=entry.split,
        room=room,
        rt60_s=rt60,
    )
    sources = {"source_clean": str(entry.clean), "source_noise": str(entry.noise)}
    return record, sources


def corpus_digest(records: Sequence[UtteranceRecord]) -> str:
    """SHA-256 over every stored sample, in record order."""
    digest = hashlib.sha256()
    for record in records:
        digest.update(record.uid.encode("utf-8"))
        for w in (record.clean, record.reverberated_clean, record.noise_segment, record.mixture):
            digest.update(np.round(w.samples * 32768.0).astype("<i4").tobytes())
    return digest.hexdigest()


def _component_paths(record: UtteranceRecord) -> Dict[str, str]:
    base = f"{record.split}/{record.uid}"
    return {
        "clean": f"{base}_clean.wav",
        "reverberated_clean": f"{base}_reverb.wav",
        "noise": f"{base}_noise.wav",
        "mixture": f"{base}_mix.wav",
    }


def write_corpus(
    records: Sequence[UtteranceRecord],
    out_dir: Union[str, Path],
    sources: Optional[Sequence[Dict[str, str]]] = None,
) -> Path:
    """Write WAVs and ``index.jsonl``; returns the index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(
            {"kind": "header", "count": len(records), "digest": corpus_digest(records)},
            sort_keys=True,
        )
    ]
    for i, record in enumerate(records):
        paths = _component_paths(record)
        write_wav(out_dir / paths["clean"], record.clean)
        write_wav(out_dir / paths["reverberated_clean"], record.reverberated_clean)
        write_wav(out_dir / paths["noise"], record.noise_segment)
        write_wav(out_dir / paths["mixture"], record.mixture)
        row: Dict[str, Any] = {
            "uid": record.uid,
            "split": record.split,
            "snr_db": record.snr_db,
            "level_dbov": record.level_dbov,
            "rir_id": record.rir_id,
            "room": record.room.to_dict() if record.room else None,
            "rt60_s": record.rt60_s,
            **paths,
        }
        if sources is not None:
            row.update(sources[i])
        lines.append(json.dumps(row, sort_keys=True))

    index_path = out_dir / INDEX_FILE
    tmp = index_path.with_suffix(".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(index_path)
    return index_path


def build_corpus(
    manifest_path: Union[str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
) -> List[UtteranceRecord]:
    """Synthesize every manifest entry.

    Each record draws from its own RNG stream, so any ``workers`` count gives
    bit-identical results. When ``out_dir`` is given the corpus is written
    there as well.
    """
    manifest = read_manifest(manifest_path)
    header = manifest.header
    flags = assign_reverb([e.reverb for e in manifest.entries], header.reverb_fraction, header.seed)

    def _one(i: int) -> Tuple[UtteranceRecord, Dict[str, str]]:
        return synthesize_record(i, manifest, flags[i])

    indices = range(len(manifest.entries))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, indices))
    else:
        results = [_one(i) for i in indices]

    records = [r for r, _ in results]
    logger.info(
        "Synthesized %d records (%d reverberant), digest %s",
        len(records),
        sum(r.is_reverberant for r in records),
        corpus_digest(records)[:12],
    )
    if out_dir is not None:
        write_corpus(records, out_dir, [s for _, s in results])
    return records


def load_corpus(corpus_dir: Union[str, Path], split: Optional[str] = None) -> List[UtteranceRecord]:
    """Read a synthesized corpus back, optionally restricted to one split.

    Raises:
        CorpusError: If the index is missing, references absent files, or the
            stored digest no longer matches the audio.
    """
    corpus_dir = Path(corpus_dir)
    index_path = corpus_dir / INDEX_FILE
    try:
        lines = [l for l in index_path.read_text(encoding="utf-8").splitlines() if l.strip()]
    except OSError as e:
        report_file_error(e, index_path, "read")
        raise CorpusError(f"no corpus index at {index_path}", path=str(index_path)) from e
    if not lines:
        raise CorpusError(f"corpus index {index_path} is empty", path=str(index_path))

    header = json.loads(lines[0])
    rows = [json.loads(l) for l in lines[1:]]
    missing = sorted(
        str(corpus_dir / row[key])
        for row in rows
        for key in ("clean", "reverberated_clean", "noise", "mixture")
        if not (corpus_dir / row[key]).is_file()
    )
    if missing:
        raise CorpusError(f"{len(missing)} corpus file(s) not found", missing=missing)

    records = [
        UtteranceRecord(
            uid=row["uid"],
            clean=read_wav(corpus_dir / row["clean"]),
            reverberated_clean=read_wav(corpus_dir / row["reverberated_clean"]),
            noise_segment=read_wav(corpus_dir / row["noise"]),
            mixture=read_wav(corpus_dir / row["mixture"]),
            snr_db=float(row["snr_db"]),
            level_dbov=float(row["level_dbov"]),
            rir_id=row.get("rir_id"),
            split=row.get("split", "train"),
            room=RoomSpec.from_dict(row["room"]) if row.get("room") else None,
            rt60_s=row.get("rt60_s"),
        )
        for row in rows
    ]
    if corpus_digest(records) != header.get("digest"):
        raise CorpusError("corpus digest mismatch", path=str(corpus_dir))
    if split is not None:
        records = [r for r in records if r.split == split]
    logger.info("Loaded %d records from %s", len(records), corpus_dir)
    return records
