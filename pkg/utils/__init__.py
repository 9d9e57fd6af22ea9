from .logger import logger, setup_logger, get_trace_logger, enable_trace, disable_trace
from .cache import report_cache, ReportCache
from . import constants
from .text_parser import (
    strip_comment, split_label, split_operands, parse_number,
    parse_register, parse_mem_operand, register_name
)

__all__ = [
    'logger', 'setup_logger', 'get_trace_logger', 'enable_trace', 'disable_trace',
    'report_cache', 'ReportCache', 'constants',
    'strip_comment', 'split_label', 'split_operands', 'parse_number',
    'parse_register', 'parse_mem_operand', 'register_name'
]
