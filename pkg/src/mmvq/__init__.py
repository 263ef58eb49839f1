"""mmvq: bidirectional image/report instruction tuning at desk scale.

A VQ image tokenizer with a clinical-information-preserving feature loss
feeds image tokens into an expandable-vocabulary autoregressive LM that is
instruction-tuned on image-to-report, report-to-image, VQA, and plain-text
tasks over a procedurally generated pseudo-CXR corpus, plus the full
evaluation stack (label AUROC/F1, Jaccard, FID, BLEU/ROUGE-L, VQA rubric).
"""

import torch as _torch

# Multi-threaded conv backward is nondeterministic at the ULP level, which
# would break bit-identical reruns; every entry point runs deterministic.
_torch.use_deterministic_algorithms(True)

__version__ = "0.1.0"
