"""Bidirectional retrieval metrics: R@K, median rank, mean rank.

Ranks are pessimistic: every tied competitor counts against the query, so
reported numbers can only understate quality, never flatter it. For an even
number of queries the median rank is the midpoint of the two central ranks
and may therefore end in .5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, IndexOutOfRangeError
from .numerics import as_matrix, as_vector

TEXT_TO_VIDEO = "text_to_video"
VIDEO_TO_TEXT = "video_to_text"
RECALL_KS = (1, 5, 10)


@dataclass
class RetrievalReport:
    direction: str
    r_at: dict[int, float]  # K -> percentage in [0, 100]
    mdr: float
    mnr: float
    n_queries: int

    def text_record(self) -> str:
        r = " ".join(f"r@{k}={self.r_at[k]:.2f}" for k in RECALL_KS)
        return (
            f"direction={self.direction} n_queries={self.n_queries} "
            f"{r} mdr={self.mdr:.1f} mnr={self.mnr:.2f}"
        )

    def csv_values(self) -> list[float]:
        return [self.r_at[k] for k in RECALL_KS] + [self.mdr, self.mnr]


def rank_of_ground_truth(scores, gt_index: int) -> int:
    """1-based rank of the ground-truth score; ties rank behind competitors."""
    scores = as_vector(scores, "scores")
    if not (0 <= gt_index < scores.size):
        raise IndexOutOfRangeError(f"gt_index {gt_index} outside [0, {scores.size})")
    gt_score = scores[gt_index]
    better_or_tied = int(np.count_nonzero(scores >= gt_score))
    # gt itself is included in the count, which yields exactly 1 + |{j != gt : s_j >= s_gt}|.
    return better_or_tied


def _ranks_for_queries(score_rows: np.ndarray) -> np.ndarray:
    return np.array(
        [rank_of_ground_truth(score_rows[i], i) for i in range(score_rows.shape[0])]
    )


def retrieval_report(S, direction: str) -> RetrievalReport:
    """Metrics over a square score matrix whose diagonal holds matched pairs.

    ``text_to_video`` ranks each text against all videos (rows of S^T);
    ``video_to_text`` ranks each video against all texts (rows of S).
    """
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimMismatchError(f"score matrix must be square, got {S.shape}")
    if direction == TEXT_TO_VIDEO:
        ranks = _ranks_for_queries(S.T)
    elif direction == VIDEO_TO_TEXT:
        ranks = _ranks_for_queries(S)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    n = ranks.size
    return RetrievalReport(
        direction=direction,
        r_at={k: 100.0 * float(np.count_nonzero(ranks <= k)) / n for k in RECALL_KS},
        mdr=float(np.median(ranks)),
        mnr=float(ranks.mean()),
        n_queries=n,
    )


def both_directions(S) -> dict[str, RetrievalReport]:
    return {
        TEXT_TO_VIDEO: retrieval_report(S, TEXT_TO_VIDEO),
        VIDEO_TO_TEXT: retrieval_report(S, VIDEO_TO_TEXT),
    }
