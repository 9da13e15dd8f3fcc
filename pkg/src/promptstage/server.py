"""HTTP/WebSocket control surface for a running pipeline.

GET /state returns the latest snapshot; /ws streams snapshots at up to
10 Hz and accepts control commands as {"cmd": ..., "args": ...}; generated
images are fetched by digest at /image/<digest>.png. A static directory
(the operator console build) can be mounted at /.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
from pathlib import Path

from aiohttp import WSMsgType, web

from .pipeline import CommandError, ControlCommand, Pipeline

log = logging.getLogger(__name__)

SNAPSHOT_PERIOD_S = 0.1  # 10 Hz cap on pushed snapshots
COMMAND_APPLY_TIMEOUT_S = 5.0


def parse_command(data: dict) -> ControlCommand:
    if not isinstance(data, dict) or "cmd" not in data:
        raise CommandError("command message must be an object with a 'cmd' field")
    args = data.get("args", {})
    if not isinstance(args, dict):
        raise CommandError("'args' must be an object")
    return ControlCommand(cmd=str(data["cmd"]), args=args)


class ControlServer:
    """Runs an aiohttp app on its own thread next to the pipeline loop."""

    def __init__(self, pipeline: Pipeline, host: str = "127.0.0.1", port: int = 0,
                 static_dir=None):
        self.pipeline = pipeline
        self.host = host
        self.port = port
        self.static_dir = Path(static_dir) if static_dir else None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._runner: web.AppRunner | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()

    # -- handlers -----------------------------------------------------------

    async def _state(self, request: web.Request) -> web.Response:
        return web.json_response(self.pipeline.snapshot())

    async def _image(self, request: web.Request) -> web.Response:
        digest = request.match_info["digest"]
        png = self.pipeline.image_png(digest)
        if png is None:
            raise web.HTTPNotFound(text=f"no image with digest {digest}")
        return web.Response(body=png, content_type="image/png")

    async def _ws(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        loop = asyncio.get_running_loop()

        async def pusher() -> None:
            last_sent = None
            while not ws.closed:
                snapshot = self.pipeline.snapshot()
                if snapshot is not last_sent:
                    await ws.send_json({"type": "snapshot", "snapshot": snapshot})
                    last_sent = snapshot
                await asyncio.sleep(SNAPSHOT_PERIOD_S)

        push_task = asyncio.create_task(pusher())
        try:
            async for message in ws:
                if message.type != WSMsgType.TEXT:
                    continue
                try:
                    data = json.loads(message.data)
                    command = parse_command(data)
                    ticket = self.pipeline.apply_control(command)
                    outcome = await loop.run_in_executor(
                        None, lambda: ticket.result(timeout=COMMAND_APPLY_TIMEOUT_S)
                    )
                    await ws.send_json(
                        {
                            "type": "ack",
                            "seq": outcome.seq,
                            "ok": outcome.ok,
                            "detail": outcome.detail,
                            "error": outcome.error,
                        }
                    )
                except (CommandError, ValueError, KeyError) as exc:
                    await ws.send_json({"type": "ack", "seq": None, "ok": False,
                                        "error": f"{type(exc).__name__}: {exc}"})
                except TimeoutError as exc:
                    await ws.send_json({"type": "ack", "seq": None, "ok": False, "error": str(exc)})
        finally:
            push_task.cancel()
        return ws

    # -- lifecycle ------------------------------------------------------------

    def _build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/state", self._state)
        app.router.add_get("/image/{digest}.png", self._image)
        app.router.add_get("/ws", self._ws)
        if self.static_dir is not None and self.static_dir.is_dir():
            async def index(request: web.Request) -> web.FileResponse:
                return web.FileResponse(self.static_dir / "index.html")

            app.router.add_get("/", index)
            app.router.add_static("/", self.static_dir)
        return app

    def _run(self) -> None:
        loop = asyncio.new_event_loop()
        asyncio.set_event_loop(loop)
        self._loop = loop

        async def start() -> None:
            self._runner = web.AppRunner(self._build_app())
            await self._runner.setup()
            site = web.TCPSite(self._runner, self.host, self.port)
            await site.start()
            server = site._server  # bound socket; needed to report the real port
            if server and server.sockets:
                self.port = server.sockets[0].getsockname()[1]
            self._started.set()

        loop.run_until_complete(start())
        loop.run_forever()
        loop.run_until_complete(self._runner.cleanup())
        loop.close()

    def start(self, timeout: float = 5.0) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True, name="control-server")
        self._thread.start()
        if not self._started.wait(timeout):
            raise RuntimeError("control server failed to start")
        log.info("control server listening on %s:%d", self.host, self.port)

    def stop(self) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._loop.stop)
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"
