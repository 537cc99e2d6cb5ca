# lib/__init__.py
# -*- coding: utf-8 -*-
"""粗視化データからの量子状態推定ライブラリ"""

__version__ = "0.3.0"
TOOL_NAME = "cgstate"
