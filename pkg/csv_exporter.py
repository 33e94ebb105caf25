"""
Result Export Module
Writes result tables as CSV and verdicts as JSON, each stamped with model hash, seed and version
"""

import json
import math
import os

import numpy as np
import pandas as pd

from config import OUTPUT, __version__


def _plain(value):
    """JSON-safe copy of nested results (numpy scalars, tuples, non-finite floats)"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, pd.DataFrame):
        return [_plain(row) for row in value.to_dict(orient='records')]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class ResultExporter:
    """
    Export result tables and verdict documents. Files carry no timestamps, so
    reruns with the same configuration and seed reproduce them byte for byte.
    """

    def __init__(self, model_hash, seed, output_dir=None, verbose=True):
        self.model_hash = model_hash
        self.seed = seed
        self.export_dir = output_dir or OUTPUT['directory']
        self.verbose = verbose
        self.exported_files = []

    def create_export_directory(self):
        """Create directory for exports"""
        if not os.path.exists(self.export_dir):
            os.makedirs(self.export_dir)
            if self.verbose:
                print(f"📁 Created export directory: {self.export_dir}")
        return self.export_dir

    def metadata(self):
        return {'model_hash': self.model_hash, 'seed': self.seed, 'version': __version__}

    def export_table(self, df, filename, title=None, column_order=None, notes=None):
        """
        Write df as CSV after '# key: value' header lines.
        Missing columns of column_order are added empty.
        """
        self.create_export_directory()
        filepath = os.path.join(self.export_dir, filename)
        export_data = df.copy()
        if column_order is not None:
            for col in column_order:
                if col not in export_data.columns:
                    export_data[col] = None
            export_data = export_data[column_order]

        with open(filepath, 'w') as f:
            if title:
                f.write(f"# {title}\n")
            for key, value in self.metadata().items():
                f.write(f"# {key}: {value}\n")
            for key, value in (notes or {}).items():
                f.write(f"# {key}: {value}\n")
            f.write("#\n")
        export_data.to_csv(filepath, mode='a', index=False, float_format=OUTPUT['float_format'])

        self.exported_files.append(filepath)
        if self.verbose:
            print(f"✅ {title or 'Table'} exported to: {filepath}")
            print(f"   Records: {len(export_data)}")
        return filepath

    def export_json(self, payload, filename):
        """Write payload under a metadata block as indented, key-sorted JSON"""
        self.create_export_directory()
        filepath = os.path.join(self.export_dir, filename)
        document = {'metadata': self.metadata(), 'result': _plain(payload)}
        with open(filepath, 'w') as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write("\n")
        self.exported_files.append(filepath)
        if self.verbose:
            print(f"✅ Results exported to: {filepath}")
        return filepath

    def export_path(self, path, filename):
        """Event log {t, pre, post} of one simulated path"""
        notes = {'start': path.start, 'final_time': path.final_time,
                 'final_position': path.final_position, 'log_weight': path.log_weight,
                 'stop_reason': path.stop_reason.value}
        if path.seed is not None:
            notes['path_index'] = path.seed.path_index
        return self.export_table(path.to_frame(), filename, title="Path event log",
                                 column_order=['t', 'pre', 'post'], notes=notes)

    def summary(self):
        if not self.verbose:
            return
        print("\n" + "=" * 50)
        print(f"📁 Export directory: {self.export_dir}")
        print(f"📄 Files exported: {len(self.exported_files)}")
        for filepath in self.exported_files:
            file_size = os.path.getsize(filepath) / 1024  # KB
            print(f"   📋 {os.path.basename(filepath)} ({file_size:.1f} KB)")
