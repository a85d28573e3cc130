import os

from aiologger import Logger
from aiologger.levels import LogLevel
from aiologger.formatters.base import Formatter

LOG_LEVEL: str = os.getenv('KDVIST_LOG_LEVEL', 'WARNING').upper()

logging = Logger.with_default_handlers(name='kdvist',
                                       level=LogLevel[LOG_LEVEL],
                                       formatter=Formatter(fmt='%(asctime)s.%(msecs)03d %(levelname)s:\t%(message)s'))
