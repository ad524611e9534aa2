"""
Forecasting ablation: paired trainings with and without the forecasting loss
"""
import json
import logging
import statistics

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from nowcast.augment import AugmentParams
from nowcast.exceptions import DatasetIOError
from nowcast.model.config import ModelConfig
from nowcast.training.evaluation import evaluate
from nowcast.training.trainer import TrainConfig, train


SUMMARY_FILE = "ablation.json"

VARIANTS = {
    "forecasting": (1.0, 1.0),
    "estimation_only": (1.0, 0.0),
}


@dataclass
class AblationSummary:
    """Test ADD of each variant per seed"""
    seeds: List[int]
    add_cm: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def medians(self) -> Dict[str, float]:
        return {variant: statistics.median(values) for variant, values in self.add_cm.items()}

    @property
    def paired_wins(self) -> int:
        """Seeds on which forecasting is strictly better than estimation alone"""
        return sum(
            1 for with_rpf, without_rpf in zip(self.add_cm["forecasting"], self.add_cm["estimation_only"])
            if with_rpf < without_rpf
        )

    def to_dict(self) -> Dict:
        return {
            "seeds": self.seeds,
            "add_cm": self.add_cm,
            "median_add_cm": self.medians,
            "paired_wins": self.paired_wins,
        }


def run_ablation(model_config: ModelConfig, train_config: TrainConfig, dataset_dir: Union[str, Path],
                 out_dir: Union[str, Path], seeds: Sequence[int] = (0, 1, 2),
                 augment_params: Optional[AugmentParams] = None) -> AblationSummary:
    """
    Train every variant for every seed, evaluate the best checkpoints on the test split and
    write ablation.json

    Keyword arguments:
    model_config -- the network configuration
    train_config -- base training settings, seed and loss weights are overridden
    dataset_dir -- the dataset root
    out_dir -- destination, one subdirectory per seed and variant
    seeds -- training seeds (default: 0, 1, 2)
    augment_params -- augmentation ranges (default: None)
    """
    out_dir = Path(out_dir)

    summary = AblationSummary(seeds=list(seeds), add_cm={variant: [] for variant in VARIANTS})

    for seed in seeds:
        for variant, weights in VARIANTS.items():
            run_dir = out_dir / f"seed_{seed}" / variant

            logging.info(f"ablation seed {seed}: training {variant} into {run_dir}")

            result = train(
                model_config,
                replace(train_config, seed=seed, loss_weights=weights),
                dataset_dir,
                run_dir,
                augment_params=augment_params,
            )

            report = evaluate(result.best_path, dataset_dir, "gt_past", split="test", device=train_config.device)

            summary.add_cm[variant].append(report.add_mean)

    summary_path = out_dir / SUMMARY_FILE

    try:
        summary_path.write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True))

    except OSError as os_err:
        raise DatasetIOError(f"unable to write ablation summary: {os_err.strerror}", path=str(summary_path)) from os_err

    logging.info(f"ablation medians {summary.medians}, forecasting better on {summary.paired_wins}/{len(seeds)} seeds")

    return summary
