from .color_log import ColorFormatter
