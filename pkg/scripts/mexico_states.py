"""
Vote-Share Toolkit — Mexican Federal Entities

The 32 federal entities (31 states plus Mexico City) with two-letter codes,
and a static alias table for resolving free-text region / place names.
"""

import unicodedata

STATES = {
    "AS": "Aguascalientes",
    "BC": "Baja California",
    "BS": "Baja California Sur",
    "CC": "Campeche",
    "CL": "Coahuila",
    "CM": "Colima",
    "CS": "Chiapas",
    "CH": "Chihuahua",
    "MX": "Ciudad de México",
    "DG": "Durango",
    "GT": "Guanajuato",
    "GR": "Guerrero",
    "HG": "Hidalgo",
    "JC": "Jalisco",
    "MC": "Estado de México",
    "MN": "Michoacán",
    "MS": "Morelos",
    "NT": "Nayarit",
    "NL": "Nuevo León",
    "OC": "Oaxaca",
    "PL": "Puebla",
    "QT": "Querétaro",
    "QR": "Quintana Roo",
    "SP": "San Luis Potosí",
    "SL": "Sinaloa",
    "SR": "Sonora",
    "TC": "Tabasco",
    "TS": "Tamaulipas",
    "TL": "Tlaxcala",
    "VZ": "Veracruz",
    "YN": "Yucatán",
    "ZS": "Zacatecas",
}

STATE_CODES = tuple(STATES)

# Greater Mexico City: Mexico City, Hidalgo and the State of Mexico.
GREATER_MEXICO_CITY = ("MX", "HG", "MC")
GREATER_MEXICO_CITY_CODE = "GMC"

MEXICO_COUNTRY_CODES = {"MX", "MEX", "MEXICO"}

_EXTRA_ALIASES = {
    "cdmx": "MX",
    "df": "MX",
    "distrito federal": "MX",
    "mexico city": "MX",
    "ciudad de mexico": "MX",
    "edomex": "MC",
    "estado de mexico": "MC",
    "state of mexico": "MC",
    "coahuila de zaragoza": "CL",
    "michoacan de ocampo": "MN",
    "veracruz de ignacio de la llave": "VZ",
    # Major cities
    "guadalajara": "JC",
    "zapopan": "JC",
    "tlaquepaque": "JC",
    "monterrey": "NL",
    "san nicolas de los garza": "NL",
    "san pedro garza garcia": "NL",
    "guadalupe": "NL",
    "tijuana": "BC",
    "mexicali": "BC",
    "ensenada": "BC",
    "la paz": "BS",
    "los cabos": "BS",
    "leon": "GT",
    "irapuato": "GT",
    "celaya": "GT",
    "toluca": "MC",
    "ecatepec": "MC",
    "naucalpan": "MC",
    "nezahualcoyotl": "MC",
    "tlalnepantla": "MC",
    "pachuca": "HG",
    "merida": "YN",
    "cancun": "QR",
    "chetumal": "QR",
    "playa del carmen": "QR",
    "hermosillo": "SR",
    "ciudad obregon": "SR",
    "culiacan": "SL",
    "mazatlan": "SL",
    "ciudad juarez": "CH",
    "saltillo": "CL",
    "torreon": "CL",
    "morelia": "MN",
    "cuernavaca": "MS",
    "acapulco": "GR",
    "chilpancingo": "GR",
    "xalapa": "VZ",
    "villahermosa": "TC",
    "tuxtla gutierrez": "CS",
    "tepic": "NT",
    "reynosa": "TS",
    "ciudad victoria": "TS",
    "tampico": "TS",
    "matamoros": "TS",
    "colima": "CM",
    "manzanillo": "CM",
}


def _fold(name: str) -> str:
    """Alias-lookup key: lowercase with accents removed."""
    decomposed = unicodedata.normalize("NFKD", name.strip().lower())
    return " ".join("".join(c for c in decomposed if not unicodedata.combining(c)).split())


STATE_ALIASES = {_fold(name): code for code, name in STATES.items()}
STATE_ALIASES.update(_EXTRA_ALIASES)
# "Mexico" alone names the country as often as the state.
STATE_ALIASES.pop("mexico", None)


def lookup_state(name: str | None) -> str | None:
    """Map a state code, state name or known city to a state code."""
    if not name:
        return None
    stripped = name.strip()
    if stripped.upper() in STATES:
        return stripped.upper()
    key = _fold(stripped)
    if key in STATE_ALIASES:
        return STATE_ALIASES[key]
    # "Zapopan, Jalisco" style place names
    for part in reversed(key.split(",")):
        part = part.strip()
        if part in STATE_ALIASES:
            return STATE_ALIASES[part]
    return None


def resolve_state(region: str | None, country: str | None, place_name: str | None = None) -> str | None:
    """Resolve optional geo attributes to a state code, or None outside Mexico."""
    if country and _fold(country).upper() not in MEXICO_COUNTRY_CODES:
        return None
    return lookup_state(region) or lookup_state(place_name)
