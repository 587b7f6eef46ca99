"""
CLI Package - command-line front end

Modules:
    commands: simulate, converge and check subcommands
"""

from .commands import main

__version__ = "1.0.0"
__all__ = ['main']
