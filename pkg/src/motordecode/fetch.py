"""Thin download helper for the public motor-movement EEG recordings."""

from __future__ import annotations

import os
import urllib.error
import urllib.request
from pathlib import Path

from .edf import SubsetSpec, parse_record, record_path, resolve_subset
from .errors import DataError

DEFAULT_BASE_URL = "https://physionet.org/files/eegmmidb/1.0.0"


class FetchError(DataError):
    """Download failed; retrying later may succeed."""


def _default_opener(url: str) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=60) as response:
            return response.read()
    except urllib.error.URLError as exc:
        raise FetchError(f"download failed for {url}: {exc}") from None


def verify_edf(path: Path) -> bool:
    """A file counts as present only if it parses and is internally
    consistent (header arithmetic matches its size)."""
    try:
        parse_record(path.read_bytes(), record_id=path.stem)
        return True
    except (DataError, OSError):
        return False


def fetch(subset: SubsetSpec, dest: Path | str,
          base_url: str = DEFAULT_BASE_URL, opener=_default_opener) -> list[Path]:
    """Download the subset's EDF files into dest (idempotent).

    Existing files that verify are skipped. The destination is checked
    before any network traffic.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    if not os.access(dest, os.W_OK):
        raise DataError(f"destination {dest} is not writable")

    fetched = []
    for record_id in resolve_subset(subset):
        target = record_path(dest, record_id)
        if target.exists() and verify_edf(target):
            fetched.append(target)
            continue
        url = f"{base_url}/{record_id[:4]}/{record_id}.edf"
        payload = opener(url)
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(".part")
        tmp.write_bytes(payload)
        if not verify_edf(tmp):
            tmp.unlink(missing_ok=True)
            raise DataError(
                f"{record_id}: downloaded file failed integrity verification"
            )
        tmp.replace(target)
        fetched.append(target)
    return fetched
