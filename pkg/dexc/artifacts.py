# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import csv
import io
import json
import logging
import pathlib
import zipfile
from typing import Any
from typing import Iterable
from typing import Optional
from typing import Union

import numpy as np

from dexc import util

"""
Reading and writing run artifacts.

Writers log what they do and report failures through the logger instead of
raising, returning False so commands can finish the remaining work and exit
non-zero. Every writer produces byte-identical files for identical input.
"""

ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)

PathLike = Union[pathlib.Path, str]


def _write_bytes(
    path: pathlib.Path, data: bytes, logger: logging.Logger, force: bool
) -> bool:
    if path.exists() and not force:
        logger.error("exists, use --force to overwrite: %s", path)
        return False
    logger.info("writing: %s", path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as artifact_file:
            artifact_file.write(data)
    except PermissionError:
        logger.error("unwritable: %s", path)
        return False
    except OSError as err:
        logger.error("%s (%s): %s", err, type(err).__name__, path)
        return False
    return True


def json_text(data: Any) -> str:
    return json.dumps(util.jsonable(data), sort_keys=True, indent=1) + "\n"


def write_json(
    path: PathLike, data: Any, logger: logging.Logger, force: bool = True
) -> bool:
    """
    Write `data` as JSON with sorted keys.

    :param force: Overwrite an existing file. When False an existing file is
        reported as an error and left alone.
    :return: True if written.
    """
    return _write_bytes(pathlib.Path(path), json_text(data).encode(), logger, force)


def read_json(path: PathLike, logger: logging.Logger) -> Optional[dict[str, Any]]:
    """
    Read a JSON object, logging why when it cannot be read.

    :return: The parsed object, or None.
    """
    path = pathlib.Path(path)
    logger.debug("reading: %s", path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        logger.error("file not found: %s", path)
        return None
    except PermissionError:
        logger.error("unreadable: %s", path)
        return None
    except OSError as err:
        logger.error("%s (%s): %s", err, type(err).__name__, path)
        return None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        logger.error("invalid JSON (%s): %s", err.msg, path)
        return None
    if not isinstance(data, dict):
        logger.error("expected a JSON object: %s", path)
        return None
    return data


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(columns: list[str], rows: Iterable[dict[str, Any]], header: bool) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if header:
        writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def write_csv(
    path: PathLike,
    columns: list[str],
    rows: Iterable[dict[str, Any]],
    logger: logging.Logger,
    append: bool = False,
) -> bool:
    """
    Write rows as CSV; `append` adds rows to an existing file without a header.
    """
    path = pathlib.Path(path)
    if append and path.exists():
        logger.debug("appending: %s", path)
        try:
            with path.open("a") as csv_file:
                csv_file.write(csv_text(columns, rows, header=False))
        except OSError as err:
            logger.error("%s (%s): %s", err, type(err).__name__, path)
            return False
        return True
    text = csv_text(columns, rows, header=True)
    return _write_bytes(path, text.encode(), logger, True)


def read_csv(path: PathLike, logger: logging.Logger) -> Optional[list[dict[str, str]]]:
    path = pathlib.Path(path)
    try:
        with path.open(newline="") as csv_file:
            return list(csv.DictReader(csv_file))
    except FileNotFoundError:
        logger.error("file not found: %s", path)
    except OSError as err:
        logger.error("%s (%s): %s", err, type(err).__name__, path)
    return None


def npz_bytes(arrays: dict[str, np.ndarray]) -> bytes:
    """
    Arrays packed as an ``.npz`` archive readable by `numpy.load`.

    Entries are stored in key order with a fixed timestamp.
    """
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, mode="w", compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            member = io.BytesIO()
            np.lib.format.write_array(
                member, np.ascontiguousarray(arrays[name]), allow_pickle=False
            )
            info = zipfile.ZipInfo(f"{name}.npy", date_time=ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            archive.writestr(info, member.getvalue())
    return buffer.getvalue()


def write_npz(
    path: PathLike, arrays: dict[str, np.ndarray], logger: logging.Logger
) -> bool:
    return _write_bytes(pathlib.Path(path), npz_bytes(arrays), logger, True)


def read_npz(path: PathLike) -> dict[str, np.ndarray]:
    with np.load(pathlib.Path(path), allow_pickle=False) as archive:
        return {name: archive[name] for name in archive.files}


def encode_meta(meta: dict[str, Any]) -> np.ndarray:
    """JSON metadata as a byte array, for storage next to numeric arrays."""
    return np.frombuffer(json_text(meta).encode(), dtype=np.uint8)


def decode_meta(array: np.ndarray) -> dict[str, Any]:
    return json.loads(array.tobytes().decode())
