"""Clients for the scene describer, object detector and segmenter.

Two backends ship: ``FixturePerception`` reads scene fixture files and is fully
deterministic; ``HttpPerception`` speaks a small JSON-over-POST protocol:

    POST {endpoint}/describe  {"scene_id"|"image_ref": ...}
        -> {"description": "..."}
    POST {endpoint}/detect    {"scene_id"|"image_ref": ..., "label_hints": [...]}
        -> {"objects": [<fixture object without mask>, ...]}
    POST {endpoint}/segment   {"scene_id": ..., "object_id": ...}
        -> {"mask": {"width": .., "height": .., "runs": [[start, len], ...]}}
           or HTTP 404 when the object has no mask

An API key, if configured, is read from the named environment variable and
sent as ``Authorization: Bearer <key>``.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Protocol

from .errors import BackendTimeout, BackendUnavailable, ConfigError, FixtureMissing, NoMaskAvailable
from .scene import (
    DEFAULT_THRESHOLDS,
    RelationThresholds,
    SceneGraph,
    SceneObject,
    SegmentationMask,
    load_scene_fixture,
)

log = logging.getLogger(__name__)

RETRY_BACKOFF_S = 0.05


class BackendKind(str, enum.Enum):
    FIXTURE = "fixture"
    HTTP = "http"


@dataclass(frozen=True)
class BackendConfig:
    backend_kind: BackendKind = BackendKind.FIXTURE
    endpoint_url: str | None = None
    api_key_env: str | None = None
    timeout: float = 5.0
    max_retries: int = 2
    fixtures_dir: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "backend_kind", BackendKind(self.backend_kind))
        if self.backend_kind is BackendKind.HTTP and not self.endpoint_url:
            raise ConfigError("http backend requires endpoint_url")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass(frozen=True)
class PerceptionRequest:
    scene_id: str | None = None
    image_ref: str | None = None
    label_hints: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if (self.scene_id is None) == (self.image_ref is None):
            raise ValueError("exactly one of scene_id / image_ref must be set")
        if self.label_hints is not None:
            object.__setattr__(self, "label_hints", tuple(self.label_hints))

    @property
    def key(self) -> str:
        return self.scene_id if self.scene_id is not None else self.image_ref  # type: ignore[return-value]


def _filter_by_hints(objects: Iterable[SceneObject], hints: tuple[str, ...] | None) -> list[SceneObject]:
    objs = sorted(objects, key=lambda o: o.object_id)
    if not hints:
        return objs
    wanted = {h.strip().lower() for h in hints}
    return [o for o in objs if o.label.lower() in wanted]


class Perception(Protocol):
    def describe_scene(self, req: PerceptionRequest) -> str: ...

    def detect(self, req: PerceptionRequest) -> list[SceneObject]: ...

    def segment(self, scene_id: str, object_id: str) -> SegmentationMask: ...


class FixturePerception:
    """Serves perception results from ``<fixtures_dir>/scenes/<scene_id>.json``."""

    backend_id = "fixture"

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def _scene_path(self, scene_id: str) -> Path:
        return self.fixtures_dir / "scenes" / f"{scene_id}.json"

    def _load(self, req_or_key: PerceptionRequest | str) -> dict[str, Any]:
        key = req_or_key if isinstance(req_or_key, str) else req_or_key.key
        if re.fullmatch(r"[A-Za-z0-9_.-]+", key) and self._scene_path(key).is_file():
            return _load_cached(str(self._scene_path(key)))
        for path in sorted((self.fixtures_dir / "scenes").glob("*.json")):
            doc = _load_cached(str(path))
            if doc.get("image_ref") == key:
                return doc
        raise FixtureMissing(f"no scene fixture {key!r}")

    def describe_scene(self, req: PerceptionRequest) -> str:
        text = self._load(req).get("description", "")
        if not text:
            raise FixtureMissing(f"fixture {req.key!r} has no description")
        return text

    def detect(self, req: PerceptionRequest) -> list[SceneObject]:
        objects = self._load(req)["objects"]
        return [o.with_mask(None) for o in _filter_by_hints(objects, req.label_hints)]

    def segment(self, scene_id: str, object_id: str) -> SegmentationMask:
        for obj in self._load(scene_id)["objects"]:
            if obj.object_id == object_id:
                if obj.mask is None:
                    raise NoMaskAvailable(f"{scene_id}/{object_id} has no stored mask")
                return obj.mask
        raise FixtureMissing(f"object {object_id!r} not in fixture {scene_id!r}")


@lru_cache(maxsize=64)
def _load_cached(path: str) -> dict[str, Any]:
    try:
        return load_scene_fixture(path)
    except FileNotFoundError:
        raise FixtureMissing(f"no scene fixture at {path}") from None


class HttpPerception:
    backend_id = "http"

    def __init__(self, config: BackendConfig):
        if config.backend_kind is not BackendKind.HTTP:
            raise ConfigError("HttpPerception needs an http BackendConfig")
        self.config = config

    def _post(self, route: str, payload: dict[str, Any]) -> dict[str, Any] | None:
        """POST with fixed-backoff retries; returns None on HTTP 404."""
        cfg = self.config
        url = cfg.endpoint_url.rstrip("/") + "/" + route  # type: ignore[union-attr]
        headers = {"Content-Type": "application/json"}
        if cfg.api_key_env and os.environ.get(cfg.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[cfg.api_key_env]}"
        body = json.dumps(payload).encode("utf-8")
        deadline = time.monotonic() + cfg.timeout * (cfg.max_retries + 1)
        last_exc: Exception | None = None
        timed_out = False
        for attempt in range(cfg.max_retries + 1):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            request = urllib.request.Request(url, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(request, timeout=min(cfg.timeout, remaining)) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                if exc.code == 404:
                    return None
                last_exc = exc
            except (socket.timeout, TimeoutError) as exc:
                last_exc, timed_out = exc, True
            except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
                timed_out = isinstance(getattr(exc, "reason", None), (socket.timeout, TimeoutError))
                last_exc = exc
            log.debug("perception %s attempt %d failed: %s", route, attempt + 1, last_exc)
            if attempt < cfg.max_retries:
                time.sleep(max(0.0, min(RETRY_BACKOFF_S, deadline - time.monotonic())))
        err = BackendTimeout if timed_out else BackendUnavailable
        raise err(f"{url} failed after {cfg.max_retries + 1} attempts: {last_exc}")

    @staticmethod
    def _target(req: PerceptionRequest) -> dict[str, Any]:
        return {"scene_id": req.scene_id} if req.scene_id is not None else {"image_ref": req.image_ref}

    def describe_scene(self, req: PerceptionRequest) -> str:
        resp = self._post("describe", self._target(req))
        if not resp or not resp.get("description"):
            raise FixtureMissing(f"backend has no scene {req.key!r}")
        return str(resp["description"])

    def detect(self, req: PerceptionRequest) -> list[SceneObject]:
        payload = self._target(req) | {"label_hints": list(req.label_hints or [])}
        resp = self._post("detect", payload)
        if resp is None:
            raise FixtureMissing(f"backend has no scene {req.key!r}")
        objects = [SceneObject.from_dict(o).with_mask(None) for o in resp.get("objects", [])]
        return _filter_by_hints(objects, req.label_hints)

    def segment(self, scene_id: str, object_id: str) -> SegmentationMask:
        resp = self._post("segment", {"scene_id": scene_id, "object_id": object_id})
        if not resp or not resp.get("mask"):
            raise NoMaskAvailable(f"backend returned no mask for {scene_id}/{object_id}")
        return SegmentationMask.from_dict(resp["mask"])


def make_perception(config: BackendConfig) -> Perception:
    if config.backend_kind is BackendKind.HTTP:
        return HttpPerception(config)
    if config.fixtures_dir is None:
        raise ConfigError("fixture backend requires fixtures_dir")
    return FixturePerception(config.fixtures_dir)


def build_scene_graph(
    req: PerceptionRequest,
    describer: Perception,
    detector: Perception | None = None,
    segmenter: Perception | None = None,
    thresholds: RelationThresholds = DEFAULT_THRESHOLDS,
) -> SceneGraph:
    """Describe, detect, segment and relate: one ``SceneGraph`` per request.

    Objects without a mask keep their box, which the relation rules then use
    as the object region.
    """
    detector = detector or describer
    segmenter = segmenter or describer
    description = describer.describe_scene(req)
    objects = []
    for obj in detector.detect(req):
        try:
            mask = segmenter.segment(req.key, obj.object_id)
        except NoMaskAvailable:
            mask = None
        objects.append(obj.with_mask(mask))
    return SceneGraph.build(
        scene_id=req.key,
        objects=objects,
        description=description,
        image_ref=req.image_ref,
        thresholds=thresholds,
    )
