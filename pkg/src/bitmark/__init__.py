"""Bitwise green/red-list watermarking over abstract autoregressive bit streams."""

from .core import (INFINITY_2B, INSTELLA_IAR, BitStream, DetectionResult, Partition,
                   ScaleSchedule, build_partition, build_relaxed_partition, classify,
                   keyed_partition, parse_green_list, total_watermarkable_bits)
from .detect import DetectConfig, count_green, detect, p_value, z_score
from .embed import (ArrayLogitSource, ConstantLogitSource, EmbedConfig, LogitSource,
                    bias_probability, embed_single_scale, embed_stream, sample_bit)
from .kernels import BACKEND

__version__ = "0.1.0"
