"""Static Maps API client and offline mock map server.

The client downloads a plain source tile and a Table-styled tactile tile
for each location, with bounded concurrency, a global request-rate
ceiling and exponential backoff on transient failures.
"""

import asyncio
import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Awaitable, Callable, Dict, List, Optional, Sequence, Tuple, Union

import httpx
import numpy as np

from ..palette import ClassPalette, snap_to_palette
from .images import center_crop, decode_png, encode_png
from .style import build_query, compile_style, default_style_rules
from .synth import synth_pair
from .types import (
    SOURCE_SIZE,
    TACTILE_FETCH_SIZE,
    DatasetError,
    FetchError,
    ImageSizeError,
    LocationRecord,
    LocationType,
    MapPair,
    MapRequest,
    QuotaExceededError,
    Split,
    StyleRule,
    SynthProfile,
    Variant,
)

logger = logging.getLogger(__name__)

STATIC_MAPS_URL = "https://maps.googleapis.com/maps/api/staticmap"
MOCK_BASE_URL = "http://mock-maps.local/staticmap"

SleepFn = Callable[[float], Awaitable[None]]


@dataclass
class FetchSettings:
    """Client settings; ``max_attempts`` counts the first request."""

    api_key: Optional[str] = None
    base_url: str = STATIC_MAPS_URL
    max_concurrency: int = 4
    min_interval: float = 0.1
    max_attempts: int = 3
    backoff_base: float = 0.5
    timeout: float = 30.0

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise DatasetError("max_concurrency must be >= 1")
        if self.max_attempts < 1:
            raise DatasetError("max_attempts must be >= 1")
        if self.min_interval < 0 or self.backoff_base < 0:
            raise DatasetError("min_interval and backoff_base must be non-negative")
        if self.timeout <= 0:
            raise DatasetError("timeout must be positive")


class RateLimiter:
    """Spaces request starts at least ``min_interval`` seconds apart."""

    def __init__(
        self,
        min_interval: float,
        sleep: SleepFn = asyncio.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.min_interval = min_interval
        self._sleep = sleep
        self._clock = clock
        self._next_start: Optional[float] = None
        self._lock = asyncio.Lock()

    async def acquire(self) -> None:
        async with self._lock:
            now = self._clock()
            if self._next_start is not None and self._next_start > now:
                await self._sleep(self._next_start - now)
                now = max(now, self._next_start)
            self._next_start = now + self.min_interval


def tactile_request(center: str, zoom: int, rules: Optional[Sequence[StyleRule]] = None) -> MapRequest:
    return MapRequest(
        center=center,
        zoom=zoom,
        variant=Variant.tactile,
        style=tuple(default_style_rules() if rules is None else rules),
    )


def source_request(center: str, zoom: int) -> MapRequest:
    return MapRequest(center=center, zoom=zoom, variant=Variant.source)


def pair_id_for(center: str, zoom: int) -> str:
    digest = hashlib.sha1(f"{center}|{zoom}".encode("utf-8")).hexdigest()[:12]
    return f"z{zoom}-{digest}"


class StaticMapClient:
    """Async client for the Static Maps API.

    Use as an async context manager. ``transport`` lets tests and the
    offline mode route requests to :class:`MockMapServer`.
    """

    def __init__(
        self,
        settings: Optional[FetchSettings] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        palette: Optional[ClassPalette] = None,
        sleep: SleepFn = asyncio.sleep,
    ):
        self.settings = settings or FetchSettings()
        if transport is None and not self.settings.api_key:
            raise DatasetError(
                "Live fetching requires an API key; set TACTILE_API_KEY"
            )
        self.palette = palette or ClassPalette.default()
        self._sleep = sleep
        self._client = httpx.AsyncClient(transport=transport, timeout=self.settings.timeout)
        self._semaphore = asyncio.Semaphore(self.settings.max_concurrency)
        self._limiter = RateLimiter(self.settings.min_interval, sleep=sleep)
        self.requests_sent = 0

    async def __aenter__(self) -> "StaticMapClient":
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        await self._client.aclose()

    def build_params(self, req: MapRequest) -> List[Tuple[str, str]]:
        """Query parameters for ``req``; ``style`` repeats once per rule."""
        width, height = req.size
        params = [
            ("center", req.center),
            ("zoom", str(req.zoom)),
            ("size", f"{width}x{height}"),
            ("format", "png"),
        ]
        params.extend(("style", s) for s in compile_style(req.style))
        if self.settings.api_key:
            params.append(("key", self.settings.api_key))
        return params

    async def fetch_image(self, req: MapRequest) -> np.ndarray:
        """Download one tile, retrying transient failures.

        Raises:
            QuotaExceededError: 403, or 429 on the last attempt.
            FetchError: other HTTP or transport failures after all attempts.
            ImageSizeError: the tile does not have the requested size.
        """
        attempts = self.settings.max_attempts
        last_status: Optional[int] = None
        last_reason = ""
        for attempt in range(1, attempts + 1):
            async with self._semaphore:
                await self._limiter.acquire()
                self.requests_sent += 1
                try:
                    response = await self._client.get(
                        self.settings.base_url, params=self.build_params(req)
                    )
                except httpx.TransportError as e:
                    last_status, last_reason = None, type(e).__name__
                    response = None

            if response is not None:
                last_status = response.status_code
                if response.status_code == 200:
                    image = decode_png(response.content)
                    if image.shape[1] != req.size[0] or image.shape[0] != req.size[1]:
                        raise ImageSizeError(
                            f"{req.variant.value} tile for '{req.center}' is "
                            f"{image.shape[1]}x{image.shape[0]}, expected "
                            f"{req.size[0]}x{req.size[1]}"
                        )
                    return image
                if response.status_code == 403:
                    raise QuotaExceededError(
                        "Map API refused the request (403): quota exhausted or key not authorized",
                        attempts=attempt,
                        status=403,
                    )
                if response.status_code != 429 and response.status_code < 500:
                    raise FetchError(
                        f"Map API returned HTTP {response.status_code} for '{req.center}'",
                        attempts=attempt,
                        status=response.status_code,
                    )
                last_reason = f"HTTP {response.status_code}"

            if attempt < attempts:
                delay = self.settings.backoff_base * (2 ** (attempt - 1))
                logger.warning(
                    f"Fetch of '{req.center}' failed ({last_reason}), "
                    f"retrying in {delay:.2f}s (attempt {attempt}/{attempts})"
                )
                await self._sleep(delay)

        if last_status == 429:
            raise QuotaExceededError(
                f"Map API rate limit persisted after {attempts} attempts",
                attempts=attempts,
                status=429,
            )
        raise FetchError(
            f"Fetching '{req.center}' failed after {attempts} attempts ({last_reason})",
            attempts=attempts,
            status=last_status,
        )

    async def fetch_pair(
        self,
        req_source: MapRequest,
        req_tactile: MapRequest,
        pair_id: Optional[str] = None,
        country: str = "",
        location_type: LocationType = LocationType.city,
        split: Split = Split.train,
    ) -> MapPair:
        """Download both variants and register them as a 512x512 pair."""
        if req_source.variant != Variant.source or req_tactile.variant != Variant.tactile:
            raise DatasetError("fetch_pair needs one source and one tactile request")
        if (req_source.center, req_source.zoom) != (req_tactile.center, req_tactile.zoom):
            raise DatasetError("Source and tactile requests must share center and zoom")

        source, tactile = await asyncio.gather(
            self.fetch_image(req_source), self.fetch_image(req_tactile)
        )
        offset = ((tactile.shape[0] - SOURCE_SIZE) // 2, (tactile.shape[1] - SOURCE_SIZE) // 2)
        tactile = snap_to_palette(center_crop(tactile, SOURCE_SIZE), self.palette)
        return MapPair(
            id=pair_id or pair_id_for(req_source.center, req_source.zoom),
            location=req_source.center,
            zoom=req_source.zoom,
            country=country,
            location_type=location_type,
            split=split,
            source=source,
            tactile=tactile,
            metadata={"crop_offset": list(offset)},
        )

    async def fetch_locations(
        self, records: Sequence[LocationRecord], zooms: Optional[Sequence[int]] = None
    ) -> List[MapPair]:
        """Fetch every (location, zoom) pair concurrently; results keep input order."""
        jobs = []
        for record in records:
            for zoom in zooms or record.zooms:
                jobs.append(
                    self.fetch_pair(
                        source_request(record.location, zoom),
                        tactile_request(record.location, zoom),
                        country=record.country,
                        location_type=record.location_type,
                        split=record.split,
                    )
                )
        pairs = await asyncio.gather(*jobs)
        logger.info(f"Fetched {len(pairs)} pairs in {self.requests_sent} requests")
        return list(pairs)


# === OFFLINE MOCK SERVER ===


@dataclass
class MockMapServer:
    """Deterministic stand-in for the Static Maps API.

    Tiles are synthetic layouts seeded by ``(center, zoom)``: the tactile
    tile is rendered at the requested fetch size and the source tile is the
    central crop of the same layout, so cropping re-aligns the pair.
    ``fail_first`` requests answer with ``fail_status``.
    """

    fail_first: int = 0
    fail_status: int = 500
    wrong_size: bool = False
    requests: List[httpx.Request] = field(default_factory=list)
    _cache: Dict[Tuple[str, int, int], MapPair] = field(default_factory=dict, repr=False)

    @property
    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handler)

    def tile_seed(self, center: str, zoom: int) -> int:
        return int(hashlib.sha256(f"{center}|{zoom}".encode("utf-8")).hexdigest()[:8], 16)

    def _layout(self, center: str, zoom: int, size: int) -> MapPair:
        key = (center, zoom, size)
        if key not in self._cache:
            profile = SynthProfile(zoom_analog=zoom, seed=self.tile_seed(center, zoom), size=size)
            self._cache[key] = synth_pair(profile)
        return self._cache[key]

    def handler(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        if len(self.requests) <= self.fail_first:
            return httpx.Response(self.fail_status, text="injected failure")

        params = request.url.params
        try:
            center = params["center"]
            zoom = int(params["zoom"])
            width, height = (int(v) for v in params["size"].split("x"))
        except (KeyError, ValueError):
            return httpx.Response(400, text="missing or invalid center/zoom/size")

        styled = bool(params.get_list("style"))
        pair = self._layout(center, zoom, TACTILE_FETCH_SIZE)
        image = pair.tactile if styled else center_crop(pair.source, width)
        if image.shape[0] != height or image.shape[1] != width:
            image = center_crop(image, min(width, height))
        if self.wrong_size:
            image = image[:-1, :-1]
        return httpx.Response(
            200, content=encode_png(image), headers={"content-type": "image/png"}
        )


# === LOCATION LISTS ===


def _as_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes")


def read_locations(path: Union[str, Path]) -> List[LocationRecord]:
    """Read a locations CSV.

    Columns: ``type`` (city|landmark|hospital|university), ``parts`` (query
    parts separated by ``;``), ``country``, and optionally ``split``,
    ``uk`` (true for the UK city form) and ``zooms`` (``;``-separated).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Locations file not found: {path}")

    records = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = {"type", "parts", "country"} - set(reader.fieldnames or [])
        if missing:
            raise DatasetError(f"{path}: missing columns {', '.join(sorted(missing))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                location_type = LocationType(row["type"].strip())
                split = Split((row.get("split") or "train").strip())
                zooms = [int(z) for z in (row.get("zooms") or "16;18").split(";") if z.strip()]
            except ValueError as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
            query = build_query(
                location_type,
                *row["parts"].split(";"),
                uk=_as_bool(row.get("uk") or ""),
            )
            records.append(
                LocationRecord(
                    location=query,
                    country=row["country"].strip(),
                    location_type=location_type,
                    split=split,
                    zooms=zooms,
                )
            )
    return records
