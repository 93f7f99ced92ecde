import logging
from pathlib import Path
from typing import List, Union

import pandas as pd

from .exceptions import OutputError
from .schemas import ExperimentSummary, OutputFormat

logger = logging.getLogger(__name__)

LEADING_COLUMNS = ['sampling', 'stopping', 'delta', 'mean_tau', 'se_tau', 'error_rate', 'inconclusive_rate']
TRAILING_COLUMNS = ['mean_witness_size', 'reps', 'seed']


def csv_columns(arm_count: int) -> List[str]:
    return LEADING_COLUMNS + [f"prop_{a + 1}" for a in range(arm_count)] + TRAILING_COLUMNS


def summary_frame(summary: ExperimentSummary) -> pd.DataFrame:
    """One row per (rule, delta) record; proportion columns are empty when no episode was conclusive."""
    rows = []
    for record in summary.records:
        row = {
            'sampling': record.sampling.value,
            'stopping': record.stopping.value,
            'delta': record.delta,
            'mean_tau': record.mean_tau,
            'se_tau': record.se_tau,
            'error_rate': record.error_rate,
            'inconclusive_rate': record.inconclusive_rate,
            'mean_witness_size': record.mean_witness_size,
            'reps': record.reps,
            'seed': record.seed,
        }
        proportions = record.proportions or [None] * summary.arm_count
        row.update({f"prop_{a + 1}": p for a, p in enumerate(proportions)})
        rows.append(row)
    return pd.DataFrame(rows, columns=csv_columns(summary.arm_count))


def emit_outputs(summary: ExperimentSummary, fmt: Union[OutputFormat, str], path: Union[str, Path]) -> Path:
    """Write the summary as CSV or as JSON (config echoed) to ``path``, creating parent directories."""
    fmt = OutputFormat(fmt)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt is OutputFormat.CSV:
            summary_frame(summary).to_csv(path, index=False)
        else:
            path.write_text(summary.model_dump_json(indent=2))
    except OSError as e:
        logger.error(f"Failed to write {fmt.value} output to {path}: {e}", exc_info=True)
        raise OutputError(path, f"Could not write {fmt.value} output: {e.strerror or e}") from e
    logger.info(f"Wrote {fmt.value} summary to {path}")
    return path


def write_summary(summary: ExperimentSummary, out_dir: Union[str, Path, None] = None) -> List[Path]:
    """Every format requested by the config, named after the experiment, under ``out_dir`` (config output_dir by default)."""
    out_dir = Path(out_dir or summary.config.output_dir)
    stem = summary.config.name or 'experiment'
    return [emit_outputs(summary, fmt, out_dir / f"{stem}.{fmt.value}") for fmt in summary.config.formats]
