"""Client for OpenRouteService-compatible travel-time matrix endpoints.

Requests go to ``POST {endpoint}/v2/matrix/{profile}`` with the API key in
the ``Authorization`` header. Durations come back in seconds and are
returned in minutes. Responses can be cached on disk, keyed by a digest of
the request (the key is not part of the digest), so repeated runs work
offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import warnings
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import requests

from marketflow.errors import (
    AuthenticationError,
    DimensionError,
    MarketflowWarning,
    ResponseFormatError,
    TravelTimeError,
)
from marketflow.geo import GeoPoint

logger = logging.getLogger(__name__)

API_KEY_ENV = "MARKETFLOW_ORS_KEY"
DEFAULT_ENDPOINT = "https://api.openrouteservice.org"
DEFAULT_PROFILE = "driving-car"


def matrix_request(
    origins: Sequence[GeoPoint], destinations: Sequence[GeoPoint]
) -> dict:
    """JSON body for one origins x destinations duration matrix."""
    n = len(origins)
    return {
        "locations": [[p.lon, p.lat] for p in [*origins, *destinations]],
        "sources": list(range(n)),
        "destinations": list(range(n, n + len(destinations))),
        "metrics": ["duration"],
    }


def _digest(url: str, body: dict) -> str:
    blob = json.dumps({"url": url, "body": body}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _post(url: str, body: dict, api_key: str | None, timeout: float) -> dict:
    headers = {"Content-Type": "application/json", "Accept": "application/json"}
    if api_key:
        headers["Authorization"] = api_key
    try:
        resp = requests.post(url, json=body, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TravelTimeError(f"request to {url} failed: {exc}") from None
    if not 200 <= resp.status_code < 300:
        excerpt = resp.text[:200].strip()
        cls = AuthenticationError if resp.status_code in (401, 403) else TravelTimeError
        raise cls(f"HTTP {resp.status_code} from {url}: {excerpt}", status=resp.status_code)
    try:
        return resp.json()
    except ValueError:
        raise ResponseFormatError(f"response from {url} is not JSON") from None


def _durations_minutes(doc, shape: tuple[int, int]) -> tuple[np.ndarray, list[tuple[int, int]]]:
    rows = doc.get("durations") if isinstance(doc, dict) else None
    if not isinstance(rows, list) or len(rows) != shape[0]:
        raise ResponseFormatError("response has no durations table of the expected size")
    out = np.empty(shape)
    missing = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != shape[1]:
            raise ResponseFormatError(f"durations row {i} has the wrong length")
        for j, value in enumerate(row):
            if value is None:
                out[i, j] = np.inf
                missing.append((i, j))
            elif isinstance(value, (int, float)) and not isinstance(value, bool):
                out[i, j] = float(value) / 60.0
            else:
                raise ResponseFormatError(f"duration [{i}][{j}] is not a number: {value!r}")
    return out, missing


def fetch_travel_time_matrix(
    endpoint: str,
    api_key: str | None,
    origins: Sequence[GeoPoint],
    destinations: Sequence[GeoPoint],
    profile: str = DEFAULT_PROFILE,
    *,
    cache_dir: str | os.PathLike | None = None,
    timeout: float = 60.0,
) -> np.ndarray:
    """Travel times in minutes, one row per origin.

    Unroutable pairs (null durations) become ``inf`` and are reported through
    a :class:`MarketflowWarning`.

    Raises:
        AuthenticationError: on HTTP 401/403.
        TravelTimeError: on any other non-2xx status or transport failure.
        ResponseFormatError: when the body is not a well-formed durations table.
    """
    if not origins or not destinations:
        raise DimensionError("travel-time matrix needs origins and destinations")
    if api_key is None:
        api_key = os.environ.get(API_KEY_ENV)
    url = f"{endpoint.rstrip('/')}/v2/matrix/{profile}"
    body = matrix_request(origins, destinations)

    cache_file = None
    doc = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"{_digest(url, body)}.json"
        if cache_file.exists():
            logger.info("travel times served from cache %s", cache_file.name)
            doc = json.loads(cache_file.read_text(encoding="utf-8"))
    if doc is None:
        doc = _post(url, body, api_key, timeout)

    minutes, missing = _durations_minutes(doc, (len(origins), len(destinations)))
    if cache_file is not None and not cache_file.exists():
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_file.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
        os.replace(tmp, cache_file)
    if missing:
        pairs = ", ".join(f"({origins[i].id}, {destinations[j].id})" for i, j in missing)
        warnings.warn(f"unroutable pairs set to inf: {pairs}", MarketflowWarning, stacklevel=2)
    return minutes


class TravelTimeClient:
    """Callable wrapper usable as a transport-cost source.

    >>> client = TravelTimeClient("http://localhost:8080", cache_dir="cache")
    >>> matrix = set_transport_costs(matrix, "traveltime", client=client)  # doctest: +SKIP
    """

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key: str | None = None,
        profile: str = DEFAULT_PROFILE,
        *,
        cache_dir: str | os.PathLike | None = None,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.profile = profile
        self.cache_dir = cache_dir
        self.timeout = timeout

    def __repr__(self) -> str:
        # never echo the key
        return f"TravelTimeClient(endpoint={self.endpoint!r}, profile={self.profile!r})"

    def __call__(self, origins: Sequence[GeoPoint], destinations: Sequence[GeoPoint]) -> np.ndarray:
        return fetch_travel_time_matrix(
            self.endpoint,
            self.api_key,
            origins,
            destinations,
            self.profile,
            cache_dir=self.cache_dir,
            timeout=self.timeout,
        )
