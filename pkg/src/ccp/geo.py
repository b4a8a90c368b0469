"""Download supplementary files for a GEO series over HTTPS."""

from __future__ import annotations

import logging
import os
import re
import tempfile
import time
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import unquote, urljoin

import requests

from .errors import FetchNetworkError, FetchWriteError, UnknownAccessionError

log = logging.getLogger(__name__)

GEO_BASE_URL = "https://ftp.ncbi.nlm.nih.gov/geo/series/"
ACCESSION_RE = re.compile(r"^GSE[0-9]+$")


def suppl_url(accession: str, base_url: str = GEO_BASE_URL) -> str:
    # GSE57249 -> GSE57nnn/GSE57249/suppl/ ; short ids collapse to GSEnnn
    prefix = accession[:-3] + "nnn" if len(accession) > 6 else "GSEnnn"
    return f"{base_url.rstrip('/')}/{prefix}/{accession}/suppl/"


class _LinkParser(HTMLParser):
    def __init__(self):
        super().__init__()
        self.links = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            href = dict(attrs).get("href")
            if href:
                self.links.append(href)


def _listing(html: str) -> list[str]:
    parser = _LinkParser()
    parser.feed(html)
    names = []
    for href in parser.links:
        if href.startswith(("?", "/", "#", "..")) or href.endswith("/") or "://" in href:
            continue
        name = unquote(href)
        if name not in names:
            names.append(name)
    return names


def _request(session, method, url, retries, backoff, **kwargs):
    last = None
    for attempt in range(retries):
        try:
            resp = session.request(method, url, timeout=60, **kwargs)
        except requests.RequestException as exc:
            last = exc
            log.warning("attempt %d/%d for %s failed: %s", attempt + 1, retries, url, exc)
            time.sleep(backoff * 2**attempt)
            continue
        if resp.status_code >= 500:
            last = f"HTTP {resp.status_code}"
            log.warning("attempt %d/%d for %s: HTTP %d", attempt + 1, retries, url, resp.status_code)
            time.sleep(backoff * 2**attempt)
            continue
        return resp
    raise FetchNetworkError(f"{method} {url} failed after {retries} attempts: {last}")


def fetch_geo(accession: str, dest_dir, *, base_url: str = GEO_BASE_URL, retries: int = 3,
              backoff: float = 1.0, session=None) -> list[Path]:
    """Fetch every supplementary file of ``accession`` into ``dest_dir``.

    Files already present with the server-reported size are skipped, so a
    repeated call returns the same paths without downloading again.
    """
    if not ACCESSION_RE.match(accession or ""):
        raise ValueError(f"malformed GEO series accession {accession!r}; expected GSE followed by digits")
    session = session or requests.Session()
    dest = Path(dest_dir)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FetchWriteError(f"cannot create {dest}: {exc}") from exc

    listing_url = suppl_url(accession, base_url)
    resp = _request(session, "GET", listing_url, retries, backoff)
    if resp.status_code == 404:
        raise UnknownAccessionError(f"{accession}: no supplementary files at {listing_url}")
    if resp.status_code != 200:
        raise FetchNetworkError(f"GET {listing_url}: HTTP {resp.status_code}")
    names = _listing(resp.text)
    if not names:
        raise UnknownAccessionError(f"{accession}: supplementary listing is empty")

    paths = []
    for name in names:
        url = urljoin(listing_url, name)
        target = dest / Path(name).name
        head = _request(session, "HEAD", url, retries, backoff, allow_redirects=True)
        size = head.headers.get("Content-Length")
        size = int(size) if size is not None and head.status_code == 200 else None
        if target.exists() and size is not None and target.stat().st_size == size:
            log.info("skipped %s (already complete)", target)
            paths.append(target)
            continue
        _download(session, url, target, size, retries, backoff)
        log.info("downloaded %s", target)
        paths.append(target)
    return paths


def _download(session, url, target, expected_size, retries, backoff):
    for attempt in range(retries):
        resp = _request(session, "GET", url, retries, backoff, stream=True)
        if resp.status_code != 200:
            raise FetchNetworkError(f"GET {url}: HTTP {resp.status_code}")
        try:
            fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".part", dir=target.parent)
        except OSError as exc:
            raise FetchWriteError(f"cannot write into {target.parent}: {exc}") from exc
        try:
            written = 0
            with os.fdopen(fd, "wb") as fh:
                try:
                    for chunk in resp.iter_content(chunk_size=1 << 16):
                        fh.write(chunk)
                        written += len(chunk)
                except requests.RequestException as exc:
                    log.warning("transfer of %s interrupted: %s", url, exc)
                    continue
            if expected_size is not None and written != expected_size:
                log.warning("size mismatch for %s: %d != %d", url, written, expected_size)
                continue
            os.replace(tmp, target)
            return
        except OSError as exc:
            raise FetchWriteError(f"cannot write {target}: {exc}") from exc
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
    raise FetchNetworkError(f"incomplete download of {url} after {retries} attempts")
