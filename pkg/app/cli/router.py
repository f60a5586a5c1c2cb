from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

if TYPE_CHECKING:
    from app.cli.context import CommandContext

Handler = Callable[["CommandContext"], None]
Configure = Callable[[argparse.ArgumentParser], None]


@dataclass(frozen=True)
class Command:
    name: str
    handler: Handler
    help: str = ""
    needs_config: bool = True
    configure: Configure | None = None


@dataclass
class Router:
    """A group of related subcommands; the dispatcher includes every router."""

    commands: list[Command] = field(default_factory=list)

    def command(
        self,
        name: str,
        help: str = "",
        needs_config: bool = True,
        configure: Configure | None = None,
    ) -> Callable[[Handler], Handler]:
        def register(handler: Handler) -> Handler:
            if any(c.name == name for c in self.commands):
                raise ValueError(f"command {name!r} registered twice")
            self.commands.append(Command(name, handler, help, needs_config, configure))
            return handler

        return register
