import csv
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from application.core.errors import IoFailure, UnsupportedDim
from application.core.logging import get_logger
from application.models import MatchHead, NDigitDataset
from application.services.encoder import Encoder
from application.services.evaluation.tasks import EmbeddedSet, embed_collection
from application.services.hib import log_det_sigma, self_mismatch_batch

logger = get_logger(__name__)

PANEL = 400
MARGIN = 20


def _header(dim: int, n_components: int, stochastic: bool) -> list:
    columns = ["index", "class", "condition"]
    for c in range(n_components):
        columns += [f"mu_{c}_{d}" for d in range(dim)]
        if stochastic:
            columns += [f"sigma_{c}_{d}" for d in range(dim)]
    return columns + ["eta", "log_det_sigma"]


def _colour(class_id: int, n_classes: int, classes: np.ndarray) -> str:
    hue = int(360 * np.searchsorted(classes, class_id) / max(n_classes, 1))
    return f"hsl({hue},70%,45%)"


def _svg(sets: Dict[str, EmbeddedSet], path: Path) -> None:
    """Side-by-side clean / corrupt panels; each component drawn as its 3-sigma ellipse."""
    all_mu = np.concatenate([s.embeddings.mu.reshape(-1, 2) for s in sets.values()])
    low, high = all_mu.min(axis=0), all_mu.max(axis=0)
    span = np.maximum(high - low, 1e-9)
    scale = (PANEL - 2 * MARGIN) / span
    classes = np.unique(np.concatenate([s.class_ids for s in sets.values()]))

    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(PANEL * len(sets)), height=str(PANEL + MARGIN))
    for panel, (condition, emb_set) in enumerate(sets.items()):
        group = ET.SubElement(root, "g", transform=f"translate({panel * PANEL},0)")
        title = ET.SubElement(group, "text", x=str(MARGIN), y=str(MARGIN - 6), fill="black")
        title.text = condition
        ET.SubElement(group, "rect", x="0", y=str(MARGIN), width=str(PANEL), height=str(PANEL),
                      fill="none", stroke="gray")
        emb = emb_set.embeddings
        for i, class_id in enumerate(emb_set.class_ids):
            colour = _colour(int(class_id), len(classes), classes)
            for c in range(emb.n_components):
                cx, cy = MARGIN + (emb.mu[i, c] - low) * scale
                if emb.sigma is None:
                    rx = ry = 1.5
                else:
                    rx, ry = 3.0 * emb.sigma[i, c] * scale
                ET.SubElement(group, "ellipse", cx=f"{cx:.2f}", cy=f"{PANEL + MARGIN - cy:.2f}",
                              rx=f"{rx:.2f}", ry=f"{ry:.2f}", fill=colour, stroke=colour,
                              attrib={"fill-opacity": "0.08", "stroke-opacity": "0.5"})
    try:
        ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from e


def embed_scatter_export(
    encoder:    Encoder,
    ds:         NDigitDataset,
    path:       Path | str,
    head:       Optional[MatchHead] = None,
    k:          int = 8,
    seed:       int = 0,
) -> Dict[str, Path]:
    """Write per-image embedding parameters for both test twins as CSV, plus an SVG scatter when D = 2."""
    enc = encoder.config
    if enc.embed_dim not in (2, 3):
        raise UnsupportedDim(f"scatter export supports D in {{2, 3}}, got D={enc.embed_dim}")
    head = head or encoder.head
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    sets = {c: embed_collection(encoder, ds.test(c), c) for c in ("clean", "corrupt")}
    rng = np.random.default_rng(seed)

    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(_header(enc.embed_dim, enc.n_components, enc.stochastic))
            for condition, emb_set in sets.items():
                emb = emb_set.embeddings
                eta = self_mismatch_batch(emb, head, k, rng)
                log_det = log_det_sigma(emb)
                for i, class_id in enumerate(emb_set.class_ids):
                    row = [i, int(class_id), condition]
                    for c in range(emb.n_components):
                        row += [f"{v:.6g}" for v in emb.mu[i, c]]
                        if emb.sigma is not None:
                            row += [f"{v:.6g}" for v in emb.sigma[i, c]]
                    writer.writerow(row + [f"{eta[i]:.6g}", f"{log_det[i]:.6g}"])
    except OSError as e:
        raise IoFailure(f"Cannot write {csv_path}: {e}") from e

    written = {"csv": csv_path}
    if enc.embed_dim == 2:
        svg_path = path.with_suffix(".svg")
        _svg(sets, svg_path)
        written["svg"] = svg_path
    logger.info(f"Scatter export written to {', '.join(str(p) for p in written.values())}")
    return written
