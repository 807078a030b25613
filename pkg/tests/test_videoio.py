"""Video decode/probe/reassemble tests on generated fixtures."""

from fractions import Fraction

import numpy as np
import pytest
from helpers import solid_frames, write_video_cv2, write_video_with_audio

from anonpipe import riffavi
from anonpipe.errors import MediaError, ReassemblyError
from anonpipe.videoio import MediaInfo, SceneOutput, decode_frames, probe, reassemble


def mean_abs_diff(a, b):
    return np.abs(a.astype(np.int32) - b.astype(np.int32)).mean(axis=(0, 1))


class TestProbe:
    def test_known_parameters(self, tmp_path):
        path = tmp_path / "v.avi"
        write_video_cv2(path, solid_frames(100, (10, 20, 30)), fps=25.0)
        info = probe(path)
        assert info.frame_count == 100
        assert info.fps == Fraction(25)
        assert info.duration == pytest.approx(4.0)
        assert (info.width, info.height) == (64, 48)
        assert not info.has_audio

    def test_single_frame_clip(self, tmp_path):
        path = tmp_path / "one.avi"
        write_video_cv2(path, solid_frames(1, (200, 0, 0)))
        assert probe(path).frame_count == 1

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.avi"
        path.write_bytes(b"")
        with pytest.raises(MediaError):
            probe(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MediaError):
            probe(tmp_path / "nope.avi")

    def test_audio_flag(self, tmp_path):
        path = tmp_path / "a.avi"
        write_video_with_audio(path, solid_frames(25, (5, 5, 5)))
        assert probe(path).has_audio

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "junk.avi"
        path.write_bytes(b"\x00" * 4096)
        with pytest.raises(MediaError):
            probe(path)


class TestDecodeFrames:
    def test_solid_red_lossless(self, tmp_path):
        path = tmp_path / "red.avi"
        write_video_cv2(path, solid_frames(10, (255, 0, 0)))
        frames = decode_frames(path)
        assert len(frames) == 10
        for f in frames:
            # FFV1 is lossless; the 2/channel codec tolerance is an upper bound.
            assert mean_abs_diff(f.pixels, np.full((48, 64, 3), (255, 0, 0), np.uint8)).max() <= 2
            assert np.array_equal(f.pixels, np.full((48, 64, 3), (255, 0, 0), np.uint8))

    def test_presentation_order_and_timestamps(self, tmp_path):
        path = tmp_path / "seq.avi"
        frames_in = [np.full((48, 64, 3), (i * 7 % 256, 0, 0), np.uint8) for i in range(20)]
        write_video_cv2(path, frames_in, fps=25.0)
        frames = decode_frames(path)
        assert [f.frame_index for f in frames] == list(range(20))
        assert frames[5].timestamp == Fraction(5, 25)
        for got, expected in zip(frames, frames_in):
            assert np.array_equal(got.pixels, expected)

    def test_one_frame(self, tmp_path):
        path = tmp_path / "one.avi"
        write_video_cv2(path, solid_frames(1, (0, 255, 0)))
        assert len(decode_frames(path)) == 1

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "full.avi"
        write_video_cv2(path, solid_frames(50, (10, 10, 10)))
        data = path.read_bytes()
        cut = tmp_path / "cut.avi"
        cut.write_bytes(data[: int(len(data) * 0.6)])
        with pytest.raises(MediaError) as err:
            decode_frames(cut)
        assert err.value.frame_index is None or err.value.frame_index < 50


def passthrough_outputs(frames, spans):
    outs = []
    for k, (start, end) in enumerate(spans):
        outs.append(
            SceneOutput(
                segment_id=k, frames=tuple(frames[start : end + 1]), passthrough=True
            )
        )
    return outs


class TestReassemble:
    def test_all_passthrough_bit_exact(self, tmp_path):
        src = tmp_path / "src.avi"
        frames_in = [np.full((48, 64, 3), (i, 100, 200 - i), np.uint8) for i in range(30)]
        write_video_cv2(src, frames_in, fps=25.0)
        decoded = decode_frames(src)
        out = tmp_path / "out.avi"
        info = reassemble(passthrough_outputs(decoded, [(0, 14), (15, 29)]), src, out)
        assert info.frame_count == 30
        redecoded = decode_frames(out)
        for got, expected in zip(redecoded, decoded):
            assert np.array_equal(got.pixels, expected.pixels)
            assert got.timestamp == expected.timestamp

    def test_replaced_segment_blue(self, tmp_path):
        src = tmp_path / "src.avi"
        frames_in = solid_frames(30, (200, 40, 40))
        write_video_cv2(src, frames_in, fps=25.0)
        decoded = decode_frames(src)
        blue = [
            f.__class__(
                frame_index=f.frame_index,
                timestamp=f.timestamp,
                width=f.width,
                height=f.height,
                pixels=np.full((48, 64, 3), (0, 0, 255), np.uint8),
            )
            for f in decoded[10:20]
        ]
        outs = [
            SceneOutput(0, tuple(decoded[0:10]), passthrough=True),
            SceneOutput(1, tuple(blue), passthrough=False),
            SceneOutput(2, tuple(decoded[20:30]), passthrough=True),
        ]
        reassemble(outs, src, tmp_path / "out.avi")
        redecoded = decode_frames(tmp_path / "out.avi")
        for i, f in enumerate(redecoded):
            expected = (0, 0, 255) if 10 <= i < 20 else (200, 40, 40)
            assert mean_abs_diff(f.pixels, np.full((48, 64, 3), expected, np.uint8)).max() <= 2

    def test_missing_segment_rejected(self, tmp_path):
        src = tmp_path / "src.avi"
        write_video_cv2(src, solid_frames(30, (1, 2, 3)))
        decoded = decode_frames(src)
        outs = passthrough_outputs(decoded, [(0, 14)])  # misses 15..29
        with pytest.raises(ReassemblyError, match="cover"):
            reassemble(outs, src, tmp_path / "out.avi")

    def test_overlap_rejected(self, tmp_path):
        src = tmp_path / "src.avi"
        write_video_cv2(src, solid_frames(30, (1, 2, 3)))
        decoded = decode_frames(src)
        outs = passthrough_outputs(decoded, [(0, 14), (10, 29)])
        with pytest.raises(ReassemblyError, match="overlap"):
            reassemble(outs, src, tmp_path / "out.avi")

    def test_duplicate_segment_rejected(self, tmp_path):
        src = tmp_path / "src.avi"
        write_video_cv2(src, solid_frames(10, (1, 2, 3)))
        decoded = decode_frames(src)
        outs = [
            SceneOutput(0, tuple(decoded), passthrough=True),
            SceneOutput(0, tuple(decoded), passthrough=True),
        ]
        with pytest.raises(ReassemblyError, match="twice"):
            reassemble(outs, src, tmp_path / "out.avi")

    def test_dimension_mismatch_rejected(self, tmp_path):
        src = tmp_path / "src.avi"
        write_video_cv2(src, solid_frames(10, (1, 2, 3)))
        decoded = decode_frames(src)
        from anonpipe.core import FrameRef

        wrong = [
            FrameRef(i, Fraction(i, 25), 32, 24, np.zeros((24, 32, 3), np.uint8))
            for i in range(10)
        ]
        with pytest.raises(ReassemblyError, match="32x24"):
            reassemble([SceneOutput(0, tuple(wrong))], src, tmp_path / "out.avi")

    def test_no_output_written_on_failure(self, tmp_path):
        src = tmp_path / "src.avi"
        write_video_cv2(src, solid_frames(30, (1, 2, 3)))
        decoded = decode_frames(src)
        out = tmp_path / "out.avi"
        with pytest.raises(ReassemblyError):
            reassemble(passthrough_outputs(decoded, [(0, 14)]), src, out)
        assert not out.exists()
        assert not list(tmp_path.glob(".out*"))  # temp files cleaned up

    def test_audio_stream_copied_byte_exact(self, tmp_path):
        src = tmp_path / "src.avi"
        samples = write_video_with_audio(src, solid_frames(50, (9, 9, 9)), fps=25.0)
        decoded = decode_frames(src)
        out = tmp_path / "out.avi"
        info = reassemble(passthrough_outputs(decoded, [(0, 49)]), src, out)
        assert info.has_audio
        track = riffavi.extract_audio(out)
        assert track.data == samples.tobytes()
        # Audio duration within one frame period of the source's.
        assert abs(track.duration - riffavi.audio_duration(src)) <= 1 / 25

    def test_round_trip_decode_counts_and_timestamps(self, tmp_path):
        src = tmp_path / "src.avi"
        frames_in = [np.full((48, 64, 3), (i * 3, i, 255 - i), np.uint8) for i in range(40)]
        write_video_cv2(src, frames_in, fps=30.0)
        first = decode_frames(src)
        out = tmp_path / "out.avi"
        reassemble(passthrough_outputs(first, [(0, 39)]), src, out)
        second = decode_frames(out)
        assert len(second) == len(first)
        assert [f.timestamp for f in second] == [f.timestamp for f in first]


class TestMediaInfoInvariants:
    def test_rejects_zero_frames(self):
        with pytest.raises(ValueError):
            MediaInfo(0, Fraction(25), 0.0, False, 64, 48)

    def test_duration_consistency(self, tmp_path):
        path = tmp_path / "v.avi"
        write_video_cv2(path, solid_frames(37, (1, 1, 1)), fps=30.0)
        info = probe(path)
        assert abs(info.duration - info.frame_count / float(info.fps)) < 1 / float(info.fps)
