"""Minimal RIFF/AVI container surgery for audio passthrough.

The video engine (OpenCV) reads and writes video-only AVI files; this
module adds and extracts audio streams at the container level so audio
samples are byte-copied, never re-encoded. Only what the pipeline needs is
implemented: parsing the header/stream/movi/idx1 layout, injecting one
audio stream, and reading one back out.

Chunk offsets in idx1 follow the common convention (relative to the
position of the 'movi' fourcc), matching what libavformat writes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MediaError

_AVIIF_KEYFRAME = 0x10
_AVIF_HASINDEX = 0x10

_STRH_FMT = "<4s4sIHHIIIIIIIIhhhh"  # 64 bytes incl. rcFrame as 4 shorts
_AVIH_FMT = "<IIIIIIIIII4I"


@dataclass
class StreamInfo:
    fcc_type: str  # 'vids' or 'auds'
    strh: dict
    strf: bytes
    strl_raw: bytes  # full strl LIST payload, reusable verbatim


@dataclass
class AviStructure:
    avih: dict
    avih_raw: bytes
    streams: list[StreamInfo]
    movi_chunks: list[tuple[bytes, bytes, int]]  # (chunk id, data, idx1 flags)


def _read_chunks(buf: bytes, off: int, end: int):
    """Yield (fourcc, list_type|None, payload_off, payload_size) at one level."""
    while off + 8 <= end:
        fourcc = buf[off : off + 4]
        (size,) = struct.unpack_from("<I", buf, off + 4)
        if off + 8 + size > len(buf):
            raise MediaError(f"truncated RIFF chunk {fourcc!r} at offset {off}")
        if fourcc in (b"RIFF", b"LIST"):
            yield fourcc, buf[off + 8 : off + 12], off + 12, size - 4
        else:
            yield fourcc, None, off + 8, size
        off += 8 + size + (size & 1)


def _parse_strh(raw: bytes) -> dict:
    fields = struct.unpack_from(_STRH_FMT, raw.ljust(struct.calcsize(_STRH_FMT), b"\0"))
    names = (
        "fccType",
        "fccHandler",
        "dwFlags",
        "wPriority",
        "wLanguage",
        "dwInitialFrames",
        "dwScale",
        "dwRate",
        "dwStart",
        "dwLength",
        "dwSuggestedBufferSize",
        "dwQuality",
        "dwSampleSize",
        "left",
        "top",
        "right",
        "bottom",
    )
    return dict(zip(names, fields))


def _parse_avih(raw: bytes) -> dict:
    fields = struct.unpack_from(_AVIH_FMT, raw.ljust(struct.calcsize(_AVIH_FMT), b"\0"))
    names = (
        "dwMicroSecPerFrame",
        "dwMaxBytesPerSec",
        "dwPaddingGranularity",
        "dwFlags",
        "dwTotalFrames",
        "dwInitialFrames",
        "dwStreams",
        "dwSuggestedBufferSize",
        "dwWidth",
        "dwHeight",
    )
    return dict(zip(names, fields))


def is_avi(path: str | Path) -> bool:
    try:
        with open(path, "rb") as fh:
            head = fh.read(12)
    except OSError:
        return False
    return len(head) == 12 and head[:4] == b"RIFF" and head[8:12] == b"AVI "


def parse_avi(path: str | Path) -> AviStructure:
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"AVI ":
        raise MediaError(f"{path}: not a RIFF/AVI file")

    avih_raw = b""
    streams: list[StreamInfo] = []
    movi: list[tuple[bytes, bytes]] = []
    idx_flags: list[int] = []

    for fourcc, ltype, poff, psize in _read_chunks(buf, 0, len(buf)):
        if fourcc != b"RIFF":
            continue
        for f2, lt2, p2, s2 in _read_chunks(buf, poff, poff + psize):
            if f2 == b"LIST" and lt2 == b"hdrl":
                for f3, lt3, p3, s3 in _read_chunks(buf, p2, p2 + s2):
                    if f3 == b"avih":
                        avih_raw = buf[p3 : p3 + s3]
                    elif f3 == b"LIST" and lt3 == b"strl":
                        strl_raw = buf[p3 : p3 + s3]
                        strh = None
                        strf = b""
                        for f4, _, p4, s4 in _read_chunks(buf, p3, p3 + s3):
                            if f4 == b"strh":
                                strh = _parse_strh(buf[p4 : p4 + s4])
                            elif f4 == b"strf":
                                strf = buf[p4 : p4 + s4]
                        if strh is None:
                            raise MediaError(f"{path}: strl without strh")
                        streams.append(
                            StreamInfo(
                                fcc_type=strh["fccType"].decode("latin1"),
                                strh=strh,
                                strf=strf,
                                strl_raw=strl_raw,
                            )
                        )
            elif f2 == b"LIST" and lt2 == b"movi":
                for f3, _, p3, s3 in _read_chunks(buf, p2, p2 + s2):
                    movi.append((f3, buf[p3 : p3 + s3]))
            elif f2 == b"idx1":
                for k in range(s2 // 16):
                    (_, flags, _, _) = struct.unpack_from("<4sIII", buf, p2 + 16 * k)
                    idx_flags.append(flags)

    if not avih_raw:
        raise MediaError(f"{path}: missing avih header")
    chunks = [
        (cid, data, idx_flags[i] if i < len(idx_flags) else _AVIIF_KEYFRAME)
        for i, (cid, data) in enumerate(movi)
    ]
    return AviStructure(
        avih=_parse_avih(avih_raw), avih_raw=avih_raw, streams=streams, movi_chunks=chunks
    )


def _chunk(fourcc: bytes, data: bytes) -> bytes:
    return fourcc + struct.pack("<I", len(data)) + data + (b"\0" if len(data) & 1 else b"")


def _list(ltype: bytes, payload: bytes) -> bytes:
    return _chunk(b"LIST", ltype + payload)


def write_avi(
    out_path: str | Path,
    avih_raw: bytes,
    stream_count: int,
    strl_raws: list[bytes],
    movi_chunks: list[tuple[bytes, bytes, int]],
) -> None:
    avih = bytearray(avih_raw)
    struct.pack_into("<I", avih, 12, _parse_avih(avih_raw)["dwFlags"] | _AVIF_HASINDEX)
    struct.pack_into("<I", avih, 24, stream_count)
    hdrl = _chunk(b"avih", bytes(avih)) + b"".join(_list(b"strl", s) for s in strl_raws)

    movi_payload = bytearray()
    idx_entries = bytearray()
    for cid, data, flags in movi_chunks:
        # idx1 offsets point at the chunk fourcc, relative to 'movi'.
        offset = 4 + len(movi_payload)
        idx_entries += struct.pack("<4sIII", cid, flags, offset, len(data))
        movi_payload += _chunk(cid, data)

    body = _list(b"hdrl", hdrl) + _list(b"movi", bytes(movi_payload)) + _chunk(
        b"idx1", bytes(idx_entries)
    )
    Path(out_path).write_bytes(_chunk(b"RIFF", b"AVI " + body))


@dataclass
class AudioTrack:
    """One audio stream ready to drop into an AVI: header plus raw chunks."""

    strl_raw: bytes
    chunks: list[bytes]
    sample_rate: float
    duration: float

    @property
    def data(self) -> bytes:
        return b"".join(self.chunks)


def pcm_track(samples: np.ndarray, sample_rate: int, chunk_seconds: float = 0.25) -> AudioTrack:
    """Build a mono PCM s16le audio track from a sample array."""
    pcm = np.asarray(samples, dtype=np.int16)
    strh = struct.pack(
        _STRH_FMT,
        b"auds",
        b"\0\0\0\0",
        0,
        0,
        0,
        0,
        1,  # dwScale
        sample_rate,  # dwRate
        0,
        len(pcm),  # dwLength in samples
        int(sample_rate * 2 * chunk_seconds),
        0xFFFFFFFF & -1,
        2,  # dwSampleSize = block align
        0,
        0,
        0,
        0,
    )
    strf = struct.pack("<HHIIHH", 1, 1, sample_rate, sample_rate * 2, 2, 16)
    strl = _chunk(b"strh", strh) + _chunk(b"strf", strf)
    step = max(int(sample_rate * chunk_seconds), 1)
    raw = pcm.tobytes()
    chunks = [raw[i * 2 : (i + step) * 2] for i in range(0, len(pcm), step)]
    return AudioTrack(
        strl_raw=strl,
        chunks=chunks,
        sample_rate=float(sample_rate),
        duration=len(pcm) / float(sample_rate),
    )


def extract_audio(path: str | Path) -> AudioTrack | None:
    """Pull the first audio stream out of an AVI, chunks verbatim."""
    st = parse_avi(path)
    audio_idx = None
    for i, stream in enumerate(st.streams):
        if stream.fcc_type == "auds":
            audio_idx = i
            break
    if audio_idx is None:
        return None
    stream = st.streams[audio_idx]
    prefix = f"{audio_idx:02d}".encode("latin1")
    chunks = [data for cid, data, _ in st.movi_chunks if cid[:2] == prefix]
    strh = stream.strh
    rate = strh["dwRate"] / max(strh["dwScale"], 1)
    duration = strh["dwLength"] * max(strh["dwScale"], 1) / max(strh["dwRate"], 1)
    return AudioTrack(
        strl_raw=stream.strl_raw, chunks=chunks, sample_rate=rate, duration=duration
    )


def mux_audio(video_path: str | Path, track: AudioTrack, out_path: str | Path) -> None:
    """Write video_path's AVI with the audio track added as stream 1.

    Video chunks keep their bytes and keyframe flags; audio chunks are
    interleaved by presentation time and byte-copied.
    """
    st = parse_avi(video_path)
    if any(s.fcc_type == "auds" for s in st.streams):
        raise MediaError(f"{video_path}: already has an audio stream")
    video_idx = next(
        (i for i, s in enumerate(st.streams) if s.fcc_type == "vids"), None
    )
    if video_idx is None:
        raise MediaError(f"{video_path}: no video stream to mux against")
    vstrh = st.streams[video_idx].strh
    fps = vstrh["dwRate"] / max(vstrh["dwScale"], 1)
    audio_id = f"{len(st.streams):02d}wb".encode("latin1")

    video_chunks = [c for c in st.movi_chunks if c[0][:2] == f"{video_idx:02d}".encode()]
    merged: list[tuple[bytes, bytes, int]] = []
    a = 0
    chunk_dt = track.duration / max(len(track.chunks), 1)
    for v, chunk in enumerate(video_chunks):
        merged.append(chunk)
        frame_t = (v + 1) / fps
        while a < len(track.chunks) and a * chunk_dt < frame_t:
            merged.append((audio_id, track.chunks[a], _AVIIF_KEYFRAME))
            a += 1
    while a < len(track.chunks):
        merged.append((audio_id, track.chunks[a], _AVIIF_KEYFRAME))
        a += 1

    strls = [s.strl_raw for s in st.streams] + [track.strl_raw]
    write_avi(out_path, st.avih_raw, len(st.streams) + 1, strls, merged)


def avi_has_audio(path: str | Path) -> bool:
    try:
        return any(s.fcc_type == "auds" for s in parse_avi(path).streams)
    except MediaError:
        return False


def mp4_has_audio(path: str | Path) -> bool:
    """Shallow MP4 box walk looking for a 'soun' handler."""
    try:
        buf = Path(path).read_bytes()
    except OSError:
        return False
    return b"soun" in buf and b"moov" in buf


def container_has_audio(path: str | Path) -> bool:
    if is_avi(path):
        return avi_has_audio(path)
    return mp4_has_audio(path)


def audio_duration(path: str | Path) -> float | None:
    if not is_avi(path):
        return None
    track = extract_audio(path)
    return track.duration if track else None
