import csv
import dataclasses
import json
import os
import pathlib
from glob import glob
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np


class FileHelper:
    @staticmethod
    def json_default(value):
        if isinstance(value, np.ndarray):
            if np.iscomplexobj(value):
                return {"re": value.real.tolist(), "im": value.imag.tolist()}
            return value.tolist()
        elif isinstance(value, (np.floating, np.integer)):
            return value.item()
        elif isinstance(value, complex):
            return {"re": value.real, "im": value.imag}
        elif dataclasses.is_dataclass(value):
            return dataclasses.asdict(value)
        elif isinstance(value, list):
            return [FileHelper.json_default(item) for item in value]
        else:
            return value.__dict__

    @staticmethod
    def to_json(obj: Any, filepath: str):
        FileHelper.check_filepath(filepath)
        with open(file=filepath, mode='w', encoding='utf-8') as f:
            json.dump(obj, f,
                      ensure_ascii=False, indent=4, default=FileHelper.json_default)

    @staticmethod
    def from_json(filepath: str):
        if not FileHelper.file_exists(filepath):
            raise ValueError(f'{filepath} does not exist')
        with open(file=filepath, mode='r', encoding='utf-8') as json_file:
            return json.load(json_file)

    @staticmethod
    def to_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str], filepath: str):
        """
        Write rows as CSV with a fixed header.

        Floats are written with repr so that identical inputs give byte-identical files.
        """
        FileHelper.check_filepath(filepath)
        with open(file=filepath, mode='w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                writer.writerow([FileHelper.format_cell(row.get(column))
                                 for column in columns])

    @staticmethod
    def read_csv(filepath: str) -> Tuple[List[str], List[Dict[str, str]]]:
        with open(file=filepath, mode='r', encoding='utf-8', newline='') as f:
            reader = csv.DictReader(f)
            rows = list(reader)
            return list(reader.fieldnames or []), rows

    @staticmethod
    def format_cell(value) -> str:
        if value is None:
            return ''
        if isinstance(value, (bool, np.bool_)):
            return 'true' if value else 'false'
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        return str(value)

    @staticmethod
    def check_filepath(filepath: str):
        if not os.path.exists(os.path.dirname(filepath)) and len(os.path.dirname(filepath)) > 0:
            os.makedirs(os.path.dirname(filepath), exist_ok=True)

    @staticmethod
    def split_filepath(fullfilepath):
        p = pathlib.Path(fullfilepath)
        file_path = str(p.parent)+'/'
        file_name = p.name
        file_extension = ''
        for suffix in p.suffixes:
            file_name = file_name.replace(suffix, '')
            file_extension = file_extension+suffix
        return file_path, file_name, file_extension

    @staticmethod
    def file_exists(fullfilepath):
        file_path, file_name, file_extension = FileHelper.split_filepath(
            fullfilepath)
        return len(glob(f"{file_path}{file_name}{file_extension}")) > 0

    @staticmethod
    def dump_amplitudes(amplitudes: np.ndarray, filepath: str):
        """Binary dump: little-endian int64 dim, then interleaved re/im float64."""
        FileHelper.check_filepath(filepath)
        amplitudes = np.asarray(amplitudes, dtype=complex)
        interleaved = np.empty(2 * amplitudes.size, dtype='<f8')
        interleaved[0::2] = amplitudes.real
        interleaved[1::2] = amplitudes.imag
        with open(file=filepath, mode='wb') as f:
            f.write(np.array([amplitudes.size], dtype='<i8').tobytes())
            f.write(interleaved.tobytes())

    @staticmethod
    def load_amplitudes(filepath: str) -> np.ndarray:
        with open(file=filepath, mode='rb') as f:
            raw = f.read()
        dim = int(np.frombuffer(raw[:8], dtype='<i8')[0])
        interleaved = np.frombuffer(raw[8:], dtype='<f8')
        if interleaved.size != 2 * dim:
            raise ValueError(
                f'{filepath} holds {interleaved.size} doubles, expected {2 * dim}')
        return interleaved[0::2] + 1j * interleaved[1::2]


class ListHelper:
    @staticmethod
    def linspace(start: float, stop: float, num: int) -> List[float]:
        if num < 1:
            raise ValueError("grid must have at least one point")
        return [float(v) for v in np.linspace(start, stop, num)]

    @staticmethod
    def geomspace(start: float, stop: float, num: int) -> List[float]:
        if num < 1:
            raise ValueError("grid must have at least one point")
        return [float(v) for v in np.geomspace(start, stop, num)]
