import numpy as np
import pytest

from layerstream.manifest import LayerTrack, SegmentInfo, VideoManifest
from layerstream.traces import ThroughputTrace


def make_manifest(bl_bits, el_bits, bl_psnr=32.0, el_psnr=44.0, T=1.0, video_id="v"):
    n = len(bl_bits)
    bl = tuple(SegmentInfo(int(b), bl_psnr) for b in bl_bits)
    el = tuple(SegmentInfo(int(b), el_psnr) for b in el_bits)
    return VideoManifest(video_id, T, n, (LayerTrack("BL", 35, bl), LayerTrack("EL", 15, el)))


def const_trace(kbps, bs_id="mbs", duration=100):
    return ThroughputTrace(bs_id, np.arange(float(duration)), np.full(duration, float(kbps)))


@pytest.fixture
def small_manifest():
    return make_manifest([1_000_000] * 6, [4_000_000] * 6)
