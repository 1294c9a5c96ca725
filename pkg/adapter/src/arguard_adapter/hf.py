"""Optional transformers-backed engines (require downloaded weights).

These wrap a zero-shot text-prompted object detector and a promptable
segmentation model from the transformers hub. They are imported lazily so the
adapter runs without torch installed; construction fails with a clear message
when the model cannot be loaded.
"""

from __future__ import annotations

import numpy as np


class HFDetector:
    def __init__(self, model_id: str, device: str = "cpu", score_floor: float = 0.1):
        try:
            from transformers import pipeline

            self._pipe = pipeline(
                "zero-shot-object-detection", model=model_id, device=device
            )
        except Exception as exc:  # missing weights, missing torch, bad id
            raise RuntimeError(f"cannot load detector model {model_id!r}: {exc}") from exc
        self.model_id = model_id
        self.score_floor = score_floor

    def detect(self, array: np.ndarray, phrases: list[str]) -> list[dict]:
        from PIL import Image as PILImage

        image = PILImage.fromarray(array)
        results = self._pipe(image, candidate_labels=list(phrases))
        detections = []
        for hit in results:
            if hit["score"] < self.score_floor:
                continue
            box = hit["box"]
            detections.append(
                {
                    "box": [
                        float(box["xmin"]),
                        float(box["ymin"]),
                        float(box["xmax"]),
                        float(box["ymax"]),
                    ],
                    "score": float(hit["score"]),
                    "phrase": str(hit["label"]),
                }
            )
        return detections


class HFSegmenter:
    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import SamModel, SamProcessor

            self._torch = torch
            self._model = SamModel.from_pretrained(model_id).to(device)
            self._processor = SamProcessor.from_pretrained(model_id)
            self._device = device
        except Exception as exc:
            raise RuntimeError(f"cannot load segmenter model {model_id!r}: {exc}") from exc
        self.model_id = model_id

    def segment(self, array: np.ndarray, box) -> np.ndarray:
        from PIL import Image as PILImage

        image = PILImage.fromarray(array)
        inputs = self._processor(
            image, input_boxes=[[list(box)]], return_tensors="pt"
        ).to(self._device)
        with self._torch.no_grad():
            outputs = self._model(**inputs)
        masks = self._processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )
        best = int(outputs.iou_scores.cpu()[0, 0].argmax())
        return np.asarray(masks[0][0, best].numpy(), dtype=bool)
