"""
Summaries of metric files: per file and role, the final-round test metrics and the traffic totals.
"""
from pathlib import Path
from typing import Union

import pandas as pd

from fedmesh.util.log import getLogger

logger = getLogger(__name__)

REPORT_COLUMNS = ['file', 'role', 'rows', 'final_round', 'final_test_loss', 'final_test_accuracy', 'bytes_sent',
                  'bytes_received']


def _summarize(name: str, frame: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for role, role_frame in frame.groupby('role', sort=True):
        # Experiment files hold one run per seed; the final round of every run counts.
        if 'seed' in role_frame.columns:
            last_round = role_frame.groupby('seed')['round'].transform('max')
        else:
            last_round = role_frame['round'].max()
        final = role_frame[role_frame['round'] == last_round]
        rows.append({
            'file': name,
            'role': role,
            'rows': len(role_frame),
            'final_round': int(final['round'].max()),
            'final_test_loss': final['test_loss'].mean(),
            'final_test_accuracy': final['test_accuracy'].mean(),
            'bytes_sent': int(role_frame['bytes_sent'].sum()),
            'bytes_received': int(role_frame['bytes_received'].sum()),
        })
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def summarize_directory(directory: Union[str, Path]) -> pd.DataFrame:
    """
    Aggregate every metrics `*.jsonl` file of `directory` and write the result to `report.csv` inside it. Files
    without metric rows, such as traffic logs, are skipped.
    @param directory: Directory holding JSONL metric files.
    @type directory: Union[str, Path]
    @return: One row per file and role.
    @rtype: pd.DataFrame
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f'no such directory {directory}')
    summaries = []
    for path in sorted(directory.glob('*.jsonl')):
        frame = pd.read_json(path, orient='records', lines=True)
        if frame.empty or not {'round', 'role', 'test_loss'}.issubset(frame.columns):
            logger.debug(f'Skipping {path.name}, it holds no metric rows')
            continue
        summaries.append(_summarize(path.stem, frame))
    report = pd.concat(summaries, ignore_index=True) if summaries else pd.DataFrame(columns=REPORT_COLUMNS)
    report.to_csv(directory / 'report.csv', index=False)
    return report
