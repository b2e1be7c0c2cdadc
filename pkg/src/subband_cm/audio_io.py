"""WAV ingestion, protocol files and the flat key-value configuration format."""

from __future__ import annotations

import logging
import os
import struct
import wave
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dsp import AudioSignal
from .errors import ConfigurationError, FormatError

logger = logging.getLogger(__name__)

PARTITIONS = ("train", "dev", "eval")


def read_wav(path) -> AudioSignal:
    """Read a mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(data):
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", data, body)
            if fmt[0] == 0xFFFE and size >= 40:
                # WAVE_FORMAT_EXTENSIBLE: the sub-format GUID starts with the format code
                fmt = (struct.unpack_from("<H", data, body + 24)[0],) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise FormatError(f"{path}: data chunk precedes fmt chunk")
            tag, channels, rate, _, _, bits = fmt
            if tag != 1:
                raise FormatError(f"{path}: unsupported format code {tag}; only integer PCM is read")
            if channels != 1:
                raise FormatError(f"{path}: {channels} channels; only mono is supported")
            if bits != 16:
                raise FormatError(f"{path}: {bits}-bit samples; only 16-bit PCM is supported")
            if body + size > len(data):
                raise FormatError(
                    f"{path}: truncated data chunk ({len(data) - body} of {size} bytes present)")
            if size % 2:
                raise FormatError(f"{path}: data chunk has an odd byte count")
            samples = np.frombuffer(data, "<i2", size // 2, body).astype(np.float64) / 32768.0
            return AudioSignal(samples, rate)
        pos = body + size + (size & 1)
    raise FormatError(f"{path}: no data chunk" if fmt else f"{path}: no fmt chunk")


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def requantize(signal: AudioSignal) -> AudioSignal:
    """Round to the 16-bit PCM grid, as if the signal had been written to a WAV file."""
    return AudioSignal(to_pcm16(signal.samples).astype(np.float64) / 32768.0, signal.sample_rate)


def write_wav(path, signal: AudioSignal):
    with wave.open(os.fspath(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(to_pcm16(signal.samples).tobytes())


# ---------------------------------------------------------------------------
# protocol files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolEntry:
    speaker_id: str
    utterance_id: str
    system_id: str
    key: Literal["bonafide", "spoof"]
    partition: str

    @property
    def attack_id(self) -> str:
        return "bonafide" if self.key == "bonafide" else self.system_id


def parse_protocol(path, partition: str) -> list[ProtocolEntry]:
    """Parse ``speaker utterance - system key`` lines."""
    if partition not in PARTITIONS:
        raise ValueError(f"partition must be one of {PARTITIONS}, got {partition!r}")
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            speaker, utt, _, system, key = fields
            if key not in ("bonafide", "spoof"):
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            if key == "bonafide" and system != "-":
                raise FormatError(f"{path}:{lineno}: bona fide entry names system {system!r}")
            if key == "spoof" and system == "-":
                raise FormatError(f"{path}:{lineno}: spoof entry has no system label")
            if utt in seen:
                raise FormatError(f"{path}:{lineno}: duplicate utterance {utt}")
            seen.add(utt)
            entries.append(ProtocolEntry(speaker, utt, system, key, partition))
    return entries


def format_protocol(entries) -> str:
    return "".join(f"{e.speaker_id} {e.utterance_id} - {e.system_id} {e.key}\n" for e in entries)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``dotted.key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        out[key] = _coerce(value)
    return out


def load_config(path) -> dict:
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), os.fspath(path))


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    return key.strip(), _coerce(value.strip())
