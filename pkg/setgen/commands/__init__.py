"""
Command-line interface.

Importing this package registers every subcommand on ``cli``.
"""
from setgen.commands.base import cli
from setgen.commands import data, replay, templates, training  # noqa: F401


def main():
    cli(prog_name='setgen')


__all__ = ['cli', 'main']
