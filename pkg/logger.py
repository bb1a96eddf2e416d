import logging
import os

from dotenv import load_dotenv

load_dotenv()

# Set up logging to a file with custom formatting and timestamp
LOG_FILE = os.getenv("DIFFEOFLOW_LOG_FILE", "logfile.txt")
QUIET = os.getenv("DIFFEOFLOW_QUIET", "0") == "1"

logging.basicConfig(filename=LOG_FILE, level=logging.DEBUG, format='%(asctime)s - %(levelname)s - %(message)s')
log = logging.getLogger("diffeoflow")

def log_to_file(prefix, message):
    log.info(f"{prefix}: {message}")

def colored(r, g, b, text):
    return "\033[38;2;{};{};{}m{} \033[38;2;255;255;255m".format(r, g, b, text)

def _echo(r, g, b, message):
    if not QUIET:
        print(colored(r, g, b, message))

def print_error(message):
    _echo(255, 0, 0, message)
    log_to_file("ERROR", message)

def print_warn(message):
    _echo(255, 255, 0, message)
    log_to_file("WARN", message)

def print_info(message):
    _echo(0, 255, 0, message)
    log_to_file("INFO", message)

def print_misc(message):
    _echo(255, 255, 255, message)
    log_to_file("MISC", message)
